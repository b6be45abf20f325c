"""
Management command to compute neighbor targets for a training set.

Usage:
    python manage.py prepare --data <train.csv> --out <targets.knnt> [--mode full|ooc]

Example:
    python manage.py prepare --data train.csv --out train.knnt
    python manage.py prepare --data train.csv --out train.knnt --mode ooc --batch 64 --rounds 50
"""
import time
from pathlib import Path

from django.conf import settings

from experiments.datasets import normalize_apply, normalize_fit
from experiments.formats import save_targets
from experiments.management.base import KnnCommand, RunOutcome
from experiments.runconfig import (
    add_data_arguments, add_format_argument, add_ooc_arguments, add_run_arguments, ooc_config_from_options,
    positive_option,
)
from knn_targets.search import exact_neighbors, ooc_neighbors_all, recall_at_k


class Command(KnnCommand):
    help = 'Compute exact or out-of-core K-nearest-neighbor targets for a training set'
    command_name = 'prepare'

    def add_arguments(self, parser):
        add_data_arguments(parser)
        add_format_argument(parser)
        parser.add_argument('--out', type=Path, required=True, help='Targets file to write')
        parser.add_argument('--k', type=int, default=None, help='Neighbors K (default 5)')
        add_ooc_arguments(parser)
        parser.add_argument('--report-recall', action='store_true',
                            help='ooc only: also compute exact targets and report recall@K')
        add_run_arguments(parser)

    def configure(self, options):
        config = super().configure(options)
        k = positive_option(options, 'k', settings.KNN_DEFAULTS['k'])
        config.options['k'] = k
        config.ooc = ooc_config_from_options(options, k, config.seed)
        config.options['workers'] = positive_option(options, 'workers', settings.KNN_DEFAULTS['workers'])
        return config

    def run(self, config):
        options = config.options
        k = options['k']
        workers = options['workers']
        raw = self.load(options['data'], options)
        stats = normalize_fit(raw)
        train = normalize_apply(stats, raw)

        started = time.perf_counter()
        if config.ooc is None:
            targets = exact_neighbors(train, k, workers=workers)
        else:
            targets = ooc_neighbors_all(train, k, config.ooc, workers=workers)
        seconds = time.perf_counter() - started
        save_targets(options['out'], targets, train.label_values, stats)

        metrics = {'samples': train.size, 'dim': train.dim, 'k': k, 'mode': 'full' if config.ooc is None else 'ooc'}
        if options['report_recall'] and config.ooc is not None:
            metrics['recall_at_k'] = recall_at_k(targets, exact_neighbors(train, k, workers=workers))
        return RunOutcome(metrics=metrics, preparation_seconds=seconds)
