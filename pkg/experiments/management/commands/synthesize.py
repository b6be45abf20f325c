"""
Management command to generate two-class Gaussian datasets.

Usage:
    python manage.py synthesize --n N --d D --out <train.csv> [--ratio R] [--test-n M --test-out <test.csv>]

Example:
    python manage.py synthesize --n 2200 --d 4 --ratio 10 --out train.csv --test-n 1100 --test-out test.csv
    python manage.py synthesize --n 100000 --d 100 --out timing.csv
"""
from pathlib import Path

from django.core.management.base import CommandError

from experiments.datasets import write_dataset_csv
from experiments.management.base import KnnCommand, RunOutcome
from experiments.synthetic import two_gaussians


class Command(KnnCommand):
    help = 'Write a two-Gaussian dataset (and optionally an independent test split) as csv'
    command_name = 'synthesize'

    def add_arguments(self, parser):
        parser.add_argument('--n', type=int, required=True, help='Number of samples')
        parser.add_argument('--d', type=int, required=True, help='Feature dimension')
        parser.add_argument('--ratio', type=float, default=1.0, help='Majority-to-minority ratio (default 1)')
        parser.add_argument('--separation', type=float, default=3.0, help='Distance between class means (default 3)')
        parser.add_argument('--seed', type=int, default=None, help='Global seed (default 0)')
        parser.add_argument('--out', type=Path, required=True, help='Training csv to write')
        parser.add_argument('--test-n', type=int, default=None, help='Size of an independent test split')
        parser.add_argument('--test-out', type=Path, default=None, help='Test csv to write')

    def configure(self, options):
        config = super().configure(options)
        if (options['test_n'] is None) != (options['test_out'] is None):
            raise CommandError("--test-n and --test-out must be given together")
        return config

    def run(self, config):
        options = config.options
        shape = dict(d=options['d'], ratio=options['ratio'], separation=options['separation'], seed=config.seed)
        train = two_gaussians(options['n'], split=0, **shape)
        write_dataset_csv(options['out'], train)
        metrics = {'train_counts': train.class_counts().tolist()}
        if options['test_n'] is not None:
            test = two_gaussians(options['test_n'], split=1, **shape)
            write_dataset_csv(options['test_out'], test)
            metrics['test_counts'] = test.class_counts().tolist()
        return RunOutcome(metrics=metrics)
