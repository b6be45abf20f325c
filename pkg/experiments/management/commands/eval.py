"""
Management command to evaluate a trained checkpoint on a test set.

Usage:
    python manage.py eval --checkpoint <model.knnseq> --train <train.csv> --test <test.csv> [--out metrics.json]

Memory network checkpoints draw their memory per seed, so --seeds and
--memory-draws only apply to them.

Example:
    python manage.py eval --checkpoint v2vsls.knnseq --train train.csv --test test.csv --out v2vsls.json
    python manage.py eval --checkpoint mnknn.knnseq --train train.csv --test test.csv --seeds 0,1,2,3,4
"""
from pathlib import Path

from django.core.management.base import CommandError

from experiments.formats import load_checkpoint
from experiments.management.base import KnnCommand, RunOutcome, mean_of_runs
from experiments.runconfig import (
    add_data_arguments, add_format_argument, add_run_arguments, parse_seeds, positive_option,
)
from training_eval.evaluation import evaluate_model


class Command(KnnCommand):
    help = 'Report macro F-1, accuracy and the confusion matrix of a checkpoint on a test set'
    command_name = 'eval'
    metrics_option = 'out'

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', type=Path, required=True, help='Checkpoint file from train')
        add_data_arguments(parser, '--train', 'Training set (reference samples for v2vs votes and memory)')
        add_data_arguments(parser, '--test', 'Test set')
        add_format_argument(parser)
        parser.add_argument('--memory-draws', type=int, default=None,
                            help='Memory networks only: memory batches averaged per query (default: as trained)')
        parser.add_argument('--out', type=Path, default=None, help='Metrics JSON file to write')
        add_run_arguments(parser, seeds=True)

    def configure(self, options):
        config = super().configure(options)
        config.seeds = parse_seeds(options['seeds'], config.seed)
        return config

    def run(self, config):
        options = config.options
        checkpoint = load_checkpoint(options['checkpoint'])
        if not checkpoint.config.is_memory_network:
            # sequence models draw nothing at evaluation time
            if len(config.seeds) > 1:
                raise CommandError(
                    f"--seeds only varies memory draws; '{checkpoint.kind}' evaluates the same for every seed"
                )
            if options['memory_draws'] is not None:
                raise CommandError(
                    f"--memory-draws only applies to memory network checkpoints, not '{checkpoint.kind}'"
                )
        train = self.load(options['train'], options, checkpoint.stats, checkpoint.label_values)
        test = self.load(options['test'], options, checkpoint.stats, checkpoint.label_values)
        model = checkpoint.build_model()
        draws = positive_option(options, 'memory_draws', checkpoint.config.memory_draws)
        workers = positive_option(options, 'workers', checkpoint.config.workers)

        runs = {}
        for seed in config.seeds:
            metrics = evaluate_model(model, test, train, seed=seed, memory_draws=draws, workers=workers)
            runs[str(seed)] = metrics.to_dict()
            self.stdout.write(f"seed {seed}: macro F-1 {metrics.macro_f1:.4f}, accuracy {metrics.accuracy:.4f}")
        return RunOutcome(metrics={
            'kind': checkpoint.kind,
            'samples': test.size,
            'per_seed': runs,
            'mean': mean_of_runs(list(runs.values())),
        })
