import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from experiments.datasets import load_dataset, read_origins
from experiments.formats import load_checkpoint, load_targets
from experiments.models import ExperimentRun
from experiments.recorder import RunRecorder


MODEL_FLAGS = ['--epochs', '2', '--hidden', '8', '--embedding', '6', '--memory-size', '8', '--k', '3']


class CommandTestCase(TestCase):
    """Runs management commands against files in a scratch directory."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.train_csv = self.tmp / 'train.csv'
        self.test_csv = self.tmp / 'test.csv'
        self.run_command(
            'synthesize', '--n', '120', '--d', '3', '--ratio', '3', '--out', self.train_csv,
            '--test-n', '60', '--test-out', self.test_csv,
        )

    def tearDown(self):
        self._tmp.cleanup()

    def run_command(self, name, *args):
        out = StringIO()
        call_command(name, *[str(a) for a in args], stdout=out, stderr=StringIO())
        return out.getvalue()

    def prepare(self, *extra):
        path = self.tmp / 'train.knnt'
        self.run_command('prepare', '--data', self.train_csv, '--out', path, '--k', '3', *extra)
        return path

    def train(self, targets, kind='v2ls'):
        path = self.tmp / f'{kind}.knnseq'
        self.run_command(
            'train', '--data', self.train_csv, '--targets', targets, '--out', path, '--model', kind, *MODEL_FLAGS
        )
        return path


class SynthesizeCommandTests(CommandTestCase):

    def test_writes_imbalanced_splits(self):
        train = load_dataset(self.train_csv)
        self.assertEqual(train.size, 120)
        self.assertEqual(train.class_counts().tolist(), [90, 30])
        self.assertEqual(load_dataset(self.test_csv).size, 60)

    def test_test_flags_go_together(self):
        with self.assertRaises(CommandError):
            self.run_command('synthesize', '--n', '10', '--d', '2', '--out', self.tmp / 'x.csv', '--test-n', '5')


class PrepareCommandTests(CommandTestCase):

    def test_ooc_writes_targets_file(self):
        path = self.prepare('--mode', 'ooc', '--batch', '64', '--rounds', '50', '--report-recall')
        stored = load_targets(path)
        self.assertEqual((stored.targets.size, stored.targets.k, stored.targets.dim), (120, 3, 3))
        self.assertIsNotNone(stored.stats)

    def test_explicit_zero_k_is_rejected(self):
        with self.assertRaisesMessage(CommandError, '--k must be at least 1, got 0'):
            self.run_command('prepare', '--data', self.train_csv, '--out', self.tmp / 'p.knnt', '--k', '0')

    def test_rounds_with_full_mode_is_a_usage_error(self):
        with self.assertRaisesMessage(CommandError, '--rounds'):
            self.prepare('--mode', 'full', '--rounds', '5')

    def test_prints_effective_config(self):
        output = self.run_command('prepare', '--data', self.train_csv, '--out', self.tmp / 'p.knnt')
        line = output.splitlines()[0]
        self.assertTrue(line.startswith('config '))
        self.assertEqual(json.loads(line[len('config '):])['command'], 'prepare')


class TrainCommandTests(CommandTestCase):

    def test_missing_targets_file_names_path(self):
        missing = self.tmp / 'nowhere.knnt'
        with self.assertRaisesMessage(CommandError, str(missing)):
            self.run_command('train', '--data', self.train_csv, '--targets', missing, '--out', self.tmp / 'm.knnseq')

    def test_full_mode_needs_targets(self):
        with self.assertRaises(CommandError):
            self.run_command('train', '--data', self.train_csv, '--out', self.tmp / 'm.knnseq')

    def test_writes_checkpoint_with_stats(self):
        checkpoint = load_checkpoint(self.train(self.prepare(), kind='v2vsls'))
        self.assertEqual(checkpoint.kind, 'v2vsls')
        self.assertEqual(checkpoint.config.epochs, 2)
        self.assertIsNotNone(checkpoint.stats)

    def test_ooc_mode(self):
        path = self.tmp / 'ooc.knnseq'
        self.run_command(
            'train', '--data', self.train_csv, '--mode', 'ooc', '--batch', '32', '--rounds', '2',
            '--out', path, '--model', 'mnknn', *MODEL_FLAGS,
        )
        self.assertEqual(load_checkpoint(path).config.mode, 'ooc')


class EvalCommandTests(CommandTestCase):

    def test_repeated_runs_give_identical_metric_files(self):
        checkpoint = self.train(self.prepare(), kind='mnknn')
        files = [self.tmp / 'first.json', self.tmp / 'second.json']
        for path in files:
            self.run_command(
                'eval', '--checkpoint', checkpoint, '--train', self.train_csv, '--test', self.test_csv,
                '--out', path, '--seeds', '0,1',
            )
        self.assertEqual(files[0].read_bytes(), files[1].read_bytes())
        record = json.loads(files[0].read_text())
        self.assertEqual(sorted(record['per_seed']), ['0', '1'])
        self.assertNotIn('training_seconds', files[0].read_text())

    def test_several_seeds_need_a_memory_network(self):
        checkpoint = self.train(self.prepare())
        with self.assertRaisesMessage(CommandError, '--seeds'):
            self.run_command(
                'eval', '--checkpoint', checkpoint, '--train', self.train_csv, '--test', self.test_csv,
                '--seeds', '0,1',
            )
        self.run_command(
            'eval', '--checkpoint', checkpoint, '--train', self.train_csv, '--test', self.test_csv, '--seeds', '3',
        )

    def test_explicit_zero_workers_is_rejected(self):
        with self.assertRaisesMessage(CommandError, '--workers must be at least 1'):
            self.run_command(
                'baseline_knn', '--train', self.train_csv, '--test', self.test_csv, '--workers', '0',
            )

    def test_baseline_knn_reports_mean(self):
        path = self.tmp / 'knn.json'
        self.run_command('baseline_knn', '--train', self.train_csv, '--test', self.test_csv, '--out', path)
        record = json.loads(path.read_text())
        self.assertGreater(record['mean']['macro_f1'], 0.5)

    def test_baseline_knn_ooc(self):
        path = self.tmp / 'knn.json'
        self.run_command(
            'baseline_knn', '--train', self.train_csv, '--test', self.test_csv, '--mode', 'ooc',
            '--batch', '64', '--rounds', '1', '--seeds', '0,1', '--out', path,
        )
        self.assertEqual(json.loads(path.read_text())['mode'], 'ooc')


class OversampleCommandTests(CommandTestCase):

    def test_smote_balances_and_evaluates(self):
        out = self.tmp / 'smote.csv'
        metrics = self.tmp / 'smote.json'
        self.run_command(
            'oversample', '--data', self.train_csv, '--method', 'smote', '--out', out,
            '--evaluate', self.test_csv, '--metrics-out', metrics,
        )
        augmented = load_dataset(out)
        self.assertEqual(augmented.class_counts().tolist(), [90, 90])
        origins = read_origins(out)
        self.assertEqual(origins.count('original'), 120)
        record = json.loads(metrics.read_text())
        self.assertEqual(record['minority_classes'], [1])
        self.assertIsNotNone(record['minority_f1_after'])

    def test_model_method_needs_checkpoint(self):
        with self.assertRaisesMessage(CommandError, '--checkpoint'):
            self.run_command('oversample', '--data', self.train_csv, '--method', 'model', '--out', self.tmp / 'm.csv')

    def test_checkpoint_contradicts_smote(self):
        with self.assertRaises(CommandError):
            self.run_command(
                'oversample', '--data', self.train_csv, '--method', 'adasyn',
                '--checkpoint', self.tmp / 'm.knnseq', '--out', self.tmp / 'm.csv',
            )

    def test_model_method(self):
        checkpoint = self.train(self.prepare(), kind='v2vsls')
        out = self.tmp / 'model.csv'
        self.run_command(
            'oversample', '--data', self.train_csv, '--method', 'model', '--checkpoint', checkpoint,
            '--k', '3', '--out', out,
        )
        origins = read_origins(out)
        synthetic = [o for o in origins if o != 'original']
        self.assertLessEqual(len(synthetic), 3 * 30)
        self.assertTrue(all(o.startswith('model:') for o in synthetic))


class ProjectCommandTests(CommandTestCase):

    def test_writes_projection_and_plot(self):
        out = self.tmp / 'pca.csv'
        plot = self.tmp / 'pca.png'
        self.run_command('project', '--data', self.train_csv, '--out', out, '--plot', plot, '--normalize')
        lines = out.read_text().splitlines()
        self.assertEqual(lines[0], 'pc1,pc2,label,origin')
        self.assertEqual(len(lines), 121)
        self.assertTrue(plot.exists())


class AblateSwapCommandTests(CommandTestCase):

    def test_reports_both_runs(self):
        targets = self.prepare()
        path = self.tmp / 'ablation.json'
        swapped = self.tmp / 'swapped.knnt'
        self.run_command(
            'ablate_swap', '--data', self.train_csv, '--targets', targets, '--test', self.test_csv,
            '--swap', '1', '3', '--model', 'v2vsls', *MODEL_FLAGS, '--out', path, '--targets-out', swapped,
        )
        record = json.loads(path.read_text())
        self.assertEqual(record['swap'], [1, 3])
        self.assertIn('macro_f1_drop', record)
        original, exchanged = load_targets(targets).targets, load_targets(swapped).targets
        self.assertEqual(original.labels[:, 0].tolist(), exchanged.labels[:, 2].tolist())

    def test_rank_outside_k(self):
        with self.assertRaises(CommandError):
            self.run_command(
                'ablate_swap', '--data', self.train_csv, '--targets', self.prepare(), '--test', self.test_csv,
                '--swap', '1', '4', *MODEL_FLAGS,
            )


class RunLedgerTests(CommandTestCase):

    def test_runs_are_recorded(self):
        self.prepare()
        with self.assertRaises(CommandError):
            self.run_command('train', '--data', self.train_csv, '--targets', self.tmp / 'gone.knnt',
                             '--out', self.tmp / 'm.knnseq')
        succeeded = ExperimentRun.objects.filter(command='prepare', status='succeeded').get()
        self.assertIsNotNone(succeeded.preparation_seconds)
        self.assertEqual(succeeded.metrics['k'], 3)
        failed = ExperimentRun.objects.filter(command='train').get()
        self.assertEqual(failed.status, 'failed')
        self.assertIn('gone.knnt', failed.error_message)
        self.assertEqual(ExperimentRun.objects.filter(command='synthesize').count(), 1)

    def test_recorder_without_start_is_a_no_op(self):
        recorder = RunRecorder('eval', {})
        recorder.succeed({'macro_f1': 1.0})
        self.assertEqual(ExperimentRun.objects.filter(command='eval').count(), 0)
