"""
Management command for the neighbor-order ablation: train once on the
stored targets and once with two neighbor ranks swapped, then compare.

Usage:
    python manage.py ablate_swap --data <train.csv> --targets <train.knnt> --test <test.csv> [--swap I J]

Example:
    python manage.py ablate_swap --data train.csv --targets train.knnt --test test.csv --model v2vsls --seeds 0,1,2
"""
from pathlib import Path

from django.core.management.base import CommandError

from experiments.formats import load_targets, save_targets
from experiments.management.base import KnnCommand, RunOutcome, mean_of_runs
from experiments.runconfig import (
    add_data_arguments, add_format_argument, add_model_arguments, add_run_arguments, parse_seeds,
    train_config_from_options,
)
from training_eval.evaluation import evaluate_model, swap_targets_ablation
from training_eval.trainer import Trainer


class Command(KnnCommand):
    help = 'Compare a model trained on ordered neighbor targets with one trained on rank-swapped targets'
    command_name = 'ablate_swap'
    metrics_option = 'out'

    def add_arguments(self, parser):
        add_data_arguments(parser)
        parser.add_argument('--targets', type=Path, required=True, help='Targets file from prepare')
        add_data_arguments(parser, '--test', 'Test set')
        add_format_argument(parser)
        parser.add_argument('--swap', type=int, nargs=2, default=[1, 3], metavar=('I', 'J'),
                            help='1-based neighbor ranks to swap (default 1 3)')
        add_model_arguments(parser)
        parser.add_argument('--out', type=Path, default=None, help='Metrics JSON file to write')
        parser.add_argument('--targets-out', type=Path, default=None, help='Also write the swapped targets file')
        add_run_arguments(parser, seeds=True)

    def configure(self, options):
        config = super().configure(options)
        config.seeds = parse_seeds(options['seeds'], config.seed)
        config.train = train_config_from_options(options, config.seed)
        return config

    def run(self, config):
        options = config.options
        stored = load_targets(options['targets'])
        if options['k'] is not None and options['k'] != stored.targets.k:
            raise CommandError(f"--k {options['k']} disagrees with K={stored.targets.k} in {options['targets']}")
        train = self.load(options['data'], options, stored.stats, stored.label_values)
        test = self.load(options['test'], options, stored.stats, stored.label_values)
        i, j = options['swap']
        swapped = swap_targets_ablation(stored.targets, i, j)
        if options['targets_out'] is not None:
            save_targets(options['targets_out'], swapped, stored.label_values, stored.stats)

        original_runs, swapped_runs = {}, {}
        for seed in config.seeds:
            train_config = train_config_from_options(options, seed, k=stored.targets.k)
            for runs, targets, name in ((original_runs, stored.targets, 'ordered'), (swapped_runs, swapped, 'swapped')):
                result = Trainer(train_config).train(train, targets)
                metrics = evaluate_model(
                    result.checkpoint.build_model(), test, train, seed=seed,
                    memory_draws=train_config.memory_draws, workers=train_config.workers,
                )
                runs[str(seed)] = metrics.to_dict()
                self.stdout.write(f"seed {seed} {name}: macro F-1 {metrics.macro_f1:.4f}")

        original_mean = mean_of_runs(list(original_runs.values()))
        swapped_mean = mean_of_runs(list(swapped_runs.values()))
        return RunOutcome(metrics={
            'kind': config.train.kind,
            'swap': [i, j],
            'ordered': {'per_seed': original_runs, 'mean': original_mean},
            'swapped': {'per_seed': swapped_runs, 'mean': swapped_mean},
            'macro_f1_drop': original_mean['macro_f1'] - swapped_mean['macro_f1'],
        })
