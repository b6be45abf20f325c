"""
Management command to train a kNN-mimicking model.

Usage:
    python manage.py train --data <train.csv> --targets <train.knnt> --out <model.knnseq> [--model KIND]
    python manage.py train --data <train.csv> --mode ooc --out <model.knnseq> [--batch B --rounds R]

Example:
    python manage.py train --data train.csv --targets train.knnt --model v2vsls --out v2vsls.knnseq
    python manage.py train --data train.csv --mode ooc --model mnknn-vec --out mnknn_vec.knnseq
"""
from pathlib import Path

from django.core.management.base import CommandError

from experiments.datasets import normalize_apply, normalize_fit
from experiments.formats import load_targets, save_checkpoint
from experiments.management.base import KnnCommand, RunOutcome
from experiments.runconfig import (
    add_data_arguments, add_format_argument, add_model_arguments, add_ooc_arguments, add_run_arguments,
    train_config_from_options,
)
from training_eval.trainer import Trainer


class Command(KnnCommand):
    help = 'Train a model against precomputed targets (full) or per-epoch out-of-core targets (ooc)'
    command_name = 'train'

    def add_arguments(self, parser):
        add_data_arguments(parser)
        add_format_argument(parser)
        parser.add_argument('--targets', type=Path, default=None, help='Targets file from prepare (--mode full)')
        parser.add_argument('--out', type=Path, required=True, help='Checkpoint file to write')
        add_model_arguments(parser)
        add_ooc_arguments(parser)
        add_run_arguments(parser)

    def configure(self, options):
        config = super().configure(options)
        if options['mode'] == 'full' and options['targets'] is None:
            raise CommandError("--targets is required with --mode full")
        if options['mode'] == 'ooc' and options['targets'] is not None:
            raise CommandError("--targets cannot be combined with --mode ooc, targets are refreshed every epoch")
        config.train = train_config_from_options(options, config.seed)
        return config

    def run(self, config):
        options = config.options
        trainer = Trainer(config.train)
        if config.train.mode == 'full':
            stored = load_targets(options['targets'])
            if stored.stats is None:
                raw = self.load(options['data'], options, label_values=stored.label_values)
                train = normalize_apply(normalize_fit(raw), raw)
            else:
                train = self.load(options['data'], options, stats=stored.stats, label_values=stored.label_values)
            result = trainer.train(train, stored.targets)
        else:
            raw = self.load(options['data'], options)
            train = normalize_apply(normalize_fit(raw), raw)
            result = trainer.train_ooc(train)

        save_checkpoint(options['out'], result.checkpoint)
        history = result.history
        metrics = {
            'kind': config.train.kind,
            'epochs_run': len(history),
            'best_epoch': result.best_epoch,
            'stopped_early': result.stopped_early,
            'losses': result.losses,
            'validation_f1': [record.validation_f1 for record in history],
        }
        return RunOutcome(metrics=metrics, training_seconds=result.seconds)
