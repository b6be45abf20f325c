"""
Management command to add synthetic minority samples to a training set.

Usage:
    python manage.py oversample --data <train.csv> --method model|smote|adasyn --out <augmented.csv>
        [--checkpoint <model.knnseq>] [--evaluate <test.csv>]

Example:
    python manage.py oversample --data train.csv --method smote --out smote.csv --evaluate test.csv
    python manage.py oversample --data train.csv --method model --checkpoint v2vsls.knnseq --out model.csv
"""
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management.base import CommandError

from experiments.datasets import align_labels, normalize_apply, normalize_fit, write_dataset_csv
from experiments.formats import load_checkpoint
from experiments.management.base import KnnCommand, RunOutcome
from experiments.runconfig import (
    add_data_arguments, add_format_argument, add_run_arguments, oversample_config_from_options,
    positive_option,
)
from oversampler.model_based import oversample
from oversampler.types import OVERSAMPLE_METHODS, class_deficits
from training_eval.evaluation import baseline_knn_classify


class Command(KnnCommand):
    help = 'Oversample minority classes with a trained vector model, SMOTE or ADASYN'
    command_name = 'oversample'
    metrics_option = 'metrics_out'

    def add_arguments(self, parser):
        add_data_arguments(parser)
        add_format_argument(parser)
        parser.add_argument('--method', choices=OVERSAMPLE_METHODS, default='smote', help='Oversampling method')
        parser.add_argument('--checkpoint', type=Path, default=None,
                            help='method model only: checkpoint of a v2vsls or mnknn_vec model')
        parser.add_argument('--k', type=int, default=None, help='Synthetic vectors per source sample (default 5)')
        parser.add_argument('--smote-k', type=int, default=None, help='SMOTE/ADASYN neighbor count (default 5)')
        parser.add_argument('--ratio', type=float, default=None,
                            help='Target minority/majority count ratio in (0, 1] (default 1.0)')
        parser.add_argument('--out', type=Path, required=True, help='Augmented csv to write')
        parser.add_argument('--evaluate', type=Path, default=None,
                            help='Test set: report kNN minority-class F-1 before and after augmentation')
        parser.add_argument('--eval-k', type=int, default=None, help='K of the evaluating kNN classifier (default 5)')
        parser.add_argument('--metrics-out', type=Path, default=None, help='Metrics JSON file to write')
        add_run_arguments(parser)

    def configure(self, options):
        config = super().configure(options)
        if options['method'] == 'model' and options['checkpoint'] is None:
            raise CommandError("--method model requires --checkpoint")
        if options['method'] != 'model' and options['checkpoint'] is not None:
            raise CommandError(f"--checkpoint only applies to --method model, not '{options['method']}'")
        config.oversample = oversample_config_from_options(options, config.seed)
        config.options['workers'] = positive_option(options, 'workers', settings.KNN_DEFAULTS['workers'])
        config.options['eval_k'] = positive_option(options, 'eval_k', settings.KNN_DEFAULTS['k'])
        return config

    def run(self, config):
        options = config.options
        cfg = config.oversample
        workers = options['workers']
        checkpoint = None
        if cfg.method == 'model':
            checkpoint = load_checkpoint(options['checkpoint'])
            train = self.load(options['data'], options, checkpoint.stats, checkpoint.label_values)
            if checkpoint.stats is None:
                train = normalize_apply(normalize_fit(train), train)
        else:
            raw = self.load(options['data'], options)
            train = normalize_apply(normalize_fit(raw), raw)

        augmented = oversample(train, cfg, checkpoint=checkpoint, workers=workers)
        write_dataset_csv(options['out'], augmented)
        for note in augmented.notes:
            self.stdout.write(self.style.WARNING(note))

        metrics = {
            'method': cfg.method,
            'original_counts': train.class_counts().tolist(),
            'augmented_counts': augmented.class_counts().tolist(),
            'synthetic': augmented.n_synthetic,
            'exhausted': augmented.exhausted,
        }
        if options['evaluate'] is not None:
            metrics.update(self.evaluate(train, augmented.combined(), options, workers))
        return RunOutcome(metrics=metrics)

    def evaluate(self, train, combined, options, workers) -> dict:
        """Minority-class F-1 of plain kNN trained on the original and on the augmented rows."""
        test = normalize_apply(train.stats, align_labels(self.load(options['evaluate'], options), train.label_values))
        k = options['eval_k']
        minority = np.flatnonzero(class_deficits(train) > 0)
        before = baseline_knn_classify(train, test, k, workers=workers)
        after = baseline_knn_classify(combined, test, k, workers=workers)
        report = {
            'minority_classes': minority.tolist(),
            'minority_f1_before': None,
            'minority_f1_after': None,
            'macro_f1_before': before.macro_f1,
            'macro_f1_after': after.macro_f1,
        }
        if minority.size:
            report['minority_f1_before'] = float(before.f1[minority].mean())
            report['minority_f1_after'] = float(after.f1[minority].mean())
            self.stdout.write(
                f"minority F-1 {report['minority_f1_before']:.4f} -> {report['minority_f1_after']:.4f}"
            )
        return report
