import json
import tempfile
from pathlib import Path

import numpy as np
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from hypothesis import given, settings as hypothesis_settings, strategies as st

from diffcore.exceptions import FormatError, ParameterError
from experiments.datasets import (
    align_labels, denormalize, load_dataset, normalize_apply, normalize_fit, read_origins, train_test_split,
    write_dataset_csv,
)
from experiments.formats import (
    load_checkpoint, load_targets, metrics_json, save_checkpoint, save_targets, targets_file_size,
)
from experiments.projection import pca_project, plot_projection, write_projection_csv
from experiments.runconfig import (
    RunConfig, ooc_config_from_options, oversample_config_from_options, parse_seeds, positive_option,
    train_config_from_options,
)
from experiments.synthetic import two_gaussians
from knn_targets.search import exact_neighbors
from knn_targets.types import Dataset, NormalizationStats
from oversampler.types import AugmentedDataset
from training_eval.checkpoint import Checkpoint
from training_eval.config import TrainConfig
from training_eval.factory import build_model


class FileTestCase(SimpleTestCase):
    """SimpleTestCase with a scratch directory."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text, encoding='utf-8')
        return path


class LoadDatasetTests(FileTestCase):
    """Tests for csv and libsvm ingestion."""

    def test_csv_labels_are_remapped(self):
        path = self.write('two.csv', 'a,b,label\n1.0,2.0,9\n3.0,4.0,5\n')
        data = load_dataset(path)
        self.assertEqual(data.n_classes, 2)
        np.testing.assert_array_equal(data.labels, [1, 0])
        np.testing.assert_array_equal(data.label_values, [5.0, 9.0])
        self.assertEqual(data.feature_names, ['a', 'b'])

    def test_csv_origin_column_is_not_a_feature(self):
        path = self.write('aug.csv', 'x1,label,origin\n1.0,0,original\n2.0,1,smote:0:0\n')
        data = load_dataset(path)
        self.assertEqual(data.dim, 1)
        self.assertEqual(read_origins(path), ['original', 'smote:0:0'])

    def test_libsvm_line_is_densified(self):
        path = self.write('one.svm', '1 3:0.5\n0 1:2.0\n')
        data = load_dataset(path, 'libsvm', dim=4)
        np.testing.assert_array_equal(data.features[0], [0.0, 0.0, 0.5, 0.0])
        np.testing.assert_array_equal(data.features[1], [2.0, 0.0, 0.0, 0.0])

    def test_libsvm_index_beyond_dim(self):
        path = self.write('wide.svm', '1 7:0.5\n0 1:2.0\n')
        with self.assertRaises(FormatError):
            load_dataset(path, 'libsvm', dim=4)

    def test_non_numeric_feature_names_line(self):
        path = self.write('bad.csv', 'a,label\n1.0,0\nfoo,1\n')
        with self.assertRaisesMessage(FormatError, 'line 3'):
            load_dataset(path)

    def test_malformed_libsvm_names_line(self):
        path = self.write('bad.svm', '1 1:0.5\n0 2-0.1\n')
        with self.assertRaisesMessage(FormatError, 'line 2'):
            load_dataset(path, 'libsvm')

    def test_missing_label_column(self):
        path = self.write('nolabel.csv', 'a,b\n1,2\n3,4\n')
        with self.assertRaisesMessage(FormatError, "no 'label' column"):
            load_dataset(path)

    def test_empty_file(self):
        path = self.write('empty.csv', '')
        with self.assertRaisesMessage(FormatError, 'empty'):
            load_dataset(path)

    def test_missing_file_names_path(self):
        with self.assertRaisesMessage(FileNotFoundError, 'nowhere.csv'):
            load_dataset(self.tmp / 'nowhere.csv')

    def test_unknown_format(self):
        path = self.write('two.csv', 'a,label\n1,0\n2,1\n')
        with self.assertRaises(ParameterError):
            load_dataset(path, 'parquet')


class NormalizationTests(SimpleTestCase):
    """Tests for z-score normalization."""

    def test_hand_z_score(self):
        data = Dataset(np.array([[0.0], [10.0]]), [0, 1], 2)
        stats = normalize_fit(data)
        np.testing.assert_allclose(stats.mean, [5.0])
        np.testing.assert_allclose(stats.std, [5.0])
        np.testing.assert_allclose(normalize_apply(stats, data).features[:, 0], [-1.0, 1.0])

    def test_constant_column_becomes_zero(self):
        data = Dataset(np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 4.0]]), [0, 1, 0], 2)
        normalized = normalize_apply(normalize_fit(data), data)
        np.testing.assert_array_equal(normalized.features[:, 0], 0.0)

    def test_standard_feature_unchanged(self):
        stats = NormalizationStats(mean=np.zeros(2), std=np.ones(2))
        x = np.array([[0.3, -1.2]])
        np.testing.assert_array_equal(normalize_apply(stats, x), x)

    def test_denormalize_restores_raw_scale(self):
        data = two_gaussians(50, 3, seed=2)
        stats = normalize_fit(data)
        np.testing.assert_allclose(denormalize(stats, normalize_apply(stats, data.features)), data.features)

    def test_applied_dataset_records_stats(self):
        data = two_gaussians(20, 2)
        stats = normalize_fit(data)
        self.assertIs(normalize_apply(stats, data).stats, stats)


class AlignLabelsTests(SimpleTestCase):
    """Tests for re-expressing labels against a stored mapping."""

    def test_test_split_missing_a_class(self):
        data = Dataset(np.zeros((2, 1)), [0, 1], 2, label_values=np.array([4.0, 7.0]))
        aligned = align_labels(data, np.array([1.0, 4.0, 7.0]))
        self.assertEqual(aligned.n_classes, 3)
        np.testing.assert_array_equal(aligned.labels, [1, 2])

    def test_unknown_label(self):
        data = Dataset(np.zeros((2, 1)), [0, 1], 2, label_values=np.array([4.0, 8.0]))
        with self.assertRaises(FormatError):
            align_labels(data, np.array([4.0, 7.0]))


class SplitAndWriteTests(FileTestCase):
    """Tests for holdout splits and csv output."""

    def test_split_partitions_rows(self):
        train, test = train_test_split(100, 0.25, seed=3)
        self.assertEqual(len(test), 25)
        np.testing.assert_array_equal(np.sort(np.concatenate([train, test])), np.arange(100))

    def test_written_csv_reloads_on_raw_scale(self):
        raw = two_gaussians(30, 2, seed=1)
        raw.label_values = np.array([3.0, 8.0])
        normalized = normalize_apply(normalize_fit(raw), raw)
        path = write_dataset_csv(self.tmp / 'out.csv', normalized)
        again = load_dataset(path)
        np.testing.assert_allclose(again.features, raw.features, atol=1e-12)
        np.testing.assert_array_equal(again.label_values, [3.0, 8.0])

    def test_augmented_csv_has_origins(self):
        train = Dataset(np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]]), [1, 1, 0], 2)
        augmented = AugmentedDataset(
            original=train, method='smote', features=[[0.5, 0.0]], labels=[1], sources=[0], ranks=[0]
        )
        path = write_dataset_csv(self.tmp / 'aug.csv', augmented)
        self.assertEqual(read_origins(path), ['original', 'original', 'original', 'smote:0:0'])
        self.assertIsNone(read_origins(write_dataset_csv(self.tmp / 'plain.csv', train)))


class TargetsFileTests(FileTestCase):
    """Tests for the binary targets format."""

    def setUp(self):
        super().setUp()
        data = two_gaussians(25, 3, seed=4)
        self.stats = normalize_fit(data)
        self.data = normalize_apply(self.stats, data)
        self.targets = exact_neighbors(self.data, 4)

    def test_round_trip_is_exact(self):
        path = save_targets(self.tmp / 't.knnt', self.targets, self.data.label_values, self.stats)
        stored = load_targets(path)
        np.testing.assert_array_equal(stored.targets.labels, self.targets.labels)
        np.testing.assert_array_equal(stored.targets.vectors, self.targets.vectors)
        np.testing.assert_array_equal(stored.targets.distances, self.targets.distances)
        np.testing.assert_array_equal(stored.stats.mean, self.stats.mean)
        np.testing.assert_array_equal(stored.stats.std, self.stats.std)
        self.assertEqual(stored.n_classes, 2)

    def test_size_follows_header(self):
        with_stats = save_targets(self.tmp / 'a.knnt', self.targets, self.data.label_values, self.stats)
        without = save_targets(self.tmp / 'b.knnt', self.targets, self.data.label_values)
        self.assertEqual(with_stats.stat().st_size, targets_file_size(4, 3, 25, 2, True))
        self.assertEqual(without.stat().st_size, targets_file_size(4, 3, 25, 2, False))
        self.assertIsNone(load_targets(without).stats)

    def test_bad_magic(self):
        path = self.tmp / 'junk.knnt'
        path.write_bytes(b'NOTKNN' + bytes(64))
        with self.assertRaisesMessage(FormatError, 'magic'):
            load_targets(path)

    def test_truncated_file(self):
        path = save_targets(self.tmp / 't.knnt', self.targets, self.data.label_values)
        path.write_bytes(path.read_bytes()[:-8])
        with self.assertRaisesMessage(FormatError, 'truncated'):
            load_targets(path)

    def test_missing_file(self):
        with self.assertRaisesMessage(FileNotFoundError, 'gone.knnt'):
            load_targets(self.tmp / 'gone.knnt')


class CheckpointFileTests(FileTestCase):
    """Tests for the binary checkpoint format."""

    def checkpoint(self, kind):
        config = TrainConfig(kind=kind, hidden=6, embedding=4, memory_size=4, k=2, seed=5)
        model = build_model(config, 3, 2)
        stats = NormalizationStats(mean=np.array([0.5, -1.0, 2.0]), std=np.array([1.0, 0.0, 3.5]))
        return Checkpoint.from_model(model, config, np.array([0.0, 1.0]), stats)

    def test_round_trip_is_bit_identical(self):
        for kind in ('v2ls', 'v2vsls', 'mnknn_vec', 'memn2n'):
            with self.subTest(kind=kind):
                original = self.checkpoint(kind)
                first = save_checkpoint(self.tmp / f'{kind}.knnseq', original)
                loaded = load_checkpoint(first)
                second = save_checkpoint(self.tmp / f'{kind}-again.knnseq', loaded)
                self.assertEqual(first.read_bytes(), second.read_bytes())
                self.assertEqual(loaded.kind, kind)
                self.assertEqual(loaded.config, original.config)
                self.assertEqual(loaded.parameter_names, original.parameter_names)
                for name, values in original.state.items():
                    np.testing.assert_array_equal(loaded.state[name], values)

    def test_loaded_checkpoint_builds_model(self):
        loaded = load_checkpoint(save_checkpoint(self.tmp / 'm.knnseq', self.checkpoint('v2vsls')))
        model = loaded.build_model()
        self.assertEqual(model.kind, 'v2vsls')
        np.testing.assert_array_equal(loaded.stats.std, [1.0, 0.0, 3.5])

    def test_bad_magic(self):
        path = self.tmp / 'junk.knnseq'
        path.write_bytes(b'KNNT1' + bytes(40))
        with self.assertRaises(FormatError):
            load_checkpoint(path)

    def test_truncated_file(self):
        path = save_checkpoint(self.tmp / 'm.knnseq', self.checkpoint('v2ls'))
        path.write_bytes(path.read_bytes()[:-3])
        with self.assertRaises(FormatError):
            load_checkpoint(path)

    def test_trailing_bytes(self):
        path = save_checkpoint(self.tmp / 'm.knnseq', self.checkpoint('v2ls'))
        path.write_bytes(path.read_bytes() + b'\x00')
        with self.assertRaisesMessage(FormatError, 'trailing'):
            load_checkpoint(path)


class MetricsJsonTests(SimpleTestCase):
    """Tests for the deterministic metrics file."""

    def test_sorted_indented_with_newline(self):
        text = metrics_json({'b': 1, 'a': [1, 2]})
        self.assertTrue(text.endswith('\n'))
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(json.loads(text), {'a': [1, 2], 'b': 1})


class ProjectionTests(FileTestCase):
    """Tests for the PCA projection."""

    def test_axis_aligned_components(self):
        rng = np.random.default_rng(0)
        features = rng.normal(size=(2000, 2)) * np.array([5.0, 1.0])
        projection = pca_project(features)
        np.testing.assert_allclose(np.abs(projection.components), np.eye(2), atol=0.05)

    def test_duplicated_rows_project_identically(self):
        rng = np.random.default_rng(1)
        features = rng.normal(size=(30, 4))
        features[7] = features[3]
        projection = pca_project(features)
        np.testing.assert_array_equal(projection.coordinates[7], projection.coordinates[3])

    @hypothesis_settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_first_variance_dominates(self, seed):
        rng = np.random.default_rng(seed)
        features = rng.normal(size=(40, 5)) * rng.uniform(0.1, 3.0, size=5)
        variances = pca_project(features).variances
        self.assertGreaterEqual(variances[0], variances[1] - 1e-9)

    def test_too_few_rows(self):
        with self.assertRaises(ParameterError):
            pca_project(np.zeros((1, 3)))

    def test_too_few_features(self):
        with self.assertRaises(ParameterError):
            pca_project(np.zeros((5, 1)))

    def test_outputs(self):
        data = two_gaussians(40, 3, seed=6)
        projection = pca_project(data.features)
        origins = ['original'] * 38 + ['model:1:0', 'model:1:1']
        csv = write_projection_csv(self.tmp / 'p.csv', projection, data.labels, origins)
        self.assertEqual(csv.read_text().splitlines()[0], 'pc1,pc2,label,origin')
        png = plot_projection(self.tmp / 'p.png', projection, data.labels, origins)
        self.assertTrue(png.read_bytes().startswith(b'\x89PNG'))


class RunConfigTests(SimpleTestCase):
    """Tests for flag merging and validation."""

    def test_parse_seeds(self):
        self.assertEqual(parse_seeds('0,1, 2', 9), [0, 1, 2])
        self.assertEqual(parse_seeds(None, 9), [9])
        with self.assertRaises(CommandError):
            parse_seeds('1,x', 0)

    def test_rounds_with_full_mode_is_contradictory(self):
        with self.assertRaisesMessage(CommandError, '--rounds'):
            ooc_config_from_options({'mode': 'full', 'rounds': 3}, 5, 0)

    def test_ooc_defaults_from_settings(self):
        cfg = ooc_config_from_options({'mode': 'ooc'}, 5, 7)
        self.assertEqual((cfg.batch, cfg.rounds, cfg.seed), (64, 50, 7))

    def test_train_config_falls_back_to_settings(self):
        config = train_config_from_options({'model': 'mnknn-vec', 'tau': 0.5}, seed=3)
        self.assertEqual(config.kind, 'mnknn_vec')
        self.assertEqual(config.tau, 0.5)
        self.assertEqual(config.k, 5)
        self.assertEqual(config.seed, 3)

    def test_explicit_zero_is_not_replaced_by_default(self):
        for options in ({'k': 0}, {'workers': 0}):
            with self.assertRaises(CommandError):
                train_config_from_options(options, seed=0)
        with self.assertRaisesMessage(CommandError, '--smote-k'):
            oversample_config_from_options({'smote_k': 0}, 0)

    def test_positive_option(self):
        self.assertEqual(positive_option({'k': None}, 'k', 5), 5)
        self.assertEqual(positive_option({}, 'k', 5), 5)
        self.assertEqual(positive_option({'k': 2}, 'k', 5), 2)
        with self.assertRaisesMessage(CommandError, '--memory-draws must be at least 1, got 0'):
            positive_option({'memory_draws': 0}, 'memory_draws', 3)

    def test_effective_config_drops_django_flags(self):
        config = RunConfig.from_options('prepare', {'verbosity': 1, 'data': Path('a.csv'), 'seed': None})
        record = json.loads(config.to_json())
        self.assertEqual(record['options'], {'data': 'a.csv', 'seed': None})
        self.assertEqual(record['seed'], 0)
