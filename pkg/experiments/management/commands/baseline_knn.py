"""
Management command to score the plain kNN classifier on a test set.

Usage:
    python manage.py baseline_knn --train <train.csv> --test <test.csv> [--mode full|ooc] [--k K]

Example:
    python manage.py baseline_knn --train train.csv --test test.csv --k 5
    python manage.py baseline_knn --train train.csv --test test.csv --mode ooc --batch 64 --rounds 1 --seeds 0,1,2
"""
from dataclasses import replace
from pathlib import Path

from django.conf import settings

from experiments.datasets import align_labels, normalize_apply, normalize_fit
from experiments.management.base import KnnCommand, RunOutcome, mean_of_runs
from experiments.runconfig import (
    add_data_arguments, add_format_argument, add_ooc_arguments, add_run_arguments, ooc_config_from_options,
    parse_seeds, positive_option,
)
from training_eval.evaluation import baseline_knn_classify


class Command(KnnCommand):
    help = 'Majority-vote kNN over exact (full) or out-of-core (ooc) neighbors'
    command_name = 'baseline_knn'
    metrics_option = 'out'

    def add_arguments(self, parser):
        add_data_arguments(parser, '--train', 'Training set')
        add_data_arguments(parser, '--test', 'Test set')
        add_format_argument(parser)
        parser.add_argument('--k', type=int, default=None, help='Neighbors K (default 5)')
        add_ooc_arguments(parser)
        parser.add_argument('--out', type=Path, default=None, help='Metrics JSON file to write')
        add_run_arguments(parser, seeds=True)

    def configure(self, options):
        config = super().configure(options)
        config.options['k'] = positive_option(options, 'k', settings.KNN_DEFAULTS['k'])
        config.ooc = ooc_config_from_options(options, config.options['k'], config.seed)
        config.options['workers'] = positive_option(options, 'workers', settings.KNN_DEFAULTS['workers'])
        config.seeds = parse_seeds(options['seeds'], config.seed)
        return config

    def run(self, config):
        options = config.options
        raw = self.load(options['train'], options)
        stats = normalize_fit(raw)
        train = normalize_apply(stats, raw)
        test = normalize_apply(stats, align_labels(self.load(options['test'], options), train.label_values))
        workers = options['workers']

        runs = {}
        for seed in config.seeds:
            ooc = None if config.ooc is None else replace(config.ooc, seed=seed)
            metrics = baseline_knn_classify(
                train, test, options['k'], mode=options['mode'], ooc=ooc, workers=workers
            )
            runs[str(seed)] = metrics.to_dict()
            self.stdout.write(f"seed {seed}: macro F-1 {metrics.macro_f1:.4f}, accuracy {metrics.accuracy:.4f}")
        return RunOutcome(metrics={
            'mode': options['mode'],
            'k': options['k'],
            'samples': test.size,
            'per_seed': runs,
            'mean': mean_of_runs(list(runs.values())),
        })
