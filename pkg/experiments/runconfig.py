"""
Effective run configuration: command-line flags merged over the settings
defaults, plus the argparse flag groups shared by the commands.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from django.conf import settings
from django.core.management.base import CommandError

from knn_targets.types import OocConfig
from oversampler.types import OVERSAMPLE_METHODS, OversampleConfig
from training_eval.config import MODEL_KINDS, TRAIN_MODES, TrainConfig, normalize_kind
from seq2seq_knn.models import FEED_MODES


DJANGO_OPTIONS = {'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color', 'force_color', 'skip_checks'}


def parse_seeds(text: Optional[str], default: int) -> List[int]:
    """'0,1,2' -> [0, 1, 2]; None -> [default]."""
    if text is None:
        return [default]
    try:
        seeds = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise CommandError(f"--seeds expects comma-separated integers, got '{text}'")
    if not seeds or any(s < 0 for s in seeds):
        raise CommandError(f"--seeds expects non-negative integers, got '{text}'")
    return seeds


def _plain(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class RunConfig:
    """The parsed command, its flags and the configs derived from them."""

    command: str
    options: dict
    seed: int = 0
    train: Optional[TrainConfig] = None
    ooc: Optional[OocConfig] = None
    oversample: Optional[OversampleConfig] = None
    seeds: List[int] = field(default_factory=list)

    @classmethod
    def from_options(cls, command: str, options: dict) -> 'RunConfig':
        cleaned = {k: _plain(v) for k, v in options.items() if k not in DJANGO_OPTIONS}
        seed = cleaned.get('seed')
        return cls(command=command, options=cleaned, seed=settings.KNN_DEFAULTS['seed'] if seed is None else seed)

    def to_dict(self) -> dict:
        record = {'command': self.command, 'options': self.options, 'seed': self.seed}
        if self.train is not None:
            record['train'] = self.train.to_dict()
        if self.ooc is not None:
            record['ooc'] = {
                'batch': self.ooc.batch, 'rounds': self.ooc.rounds,
                'seed': self.ooc.seed, 'full_coverage': self.ooc.full_coverage,
            }
        if self.oversample is not None:
            record['oversample'] = {
                'method': self.oversample.method, 'k': self.oversample.k, 'smote_k': self.oversample.smote_k,
                'seed': self.oversample.seed, 'ratio': self.oversample.ratio,
            }
        if self.seeds:
            record['seeds'] = self.seeds
        return record

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def add_data_arguments(parser, name='--data', help_text='Dataset file (csv or libsvm)', required=True):
    parser.add_argument(name, type=Path, required=required, help=help_text)


def add_format_argument(parser):
    parser.add_argument('--format', choices=('csv', 'libsvm'), default='csv', help='Dataset file format')
    parser.add_argument('--dim', type=int, default=None, help='libsvm only: dense feature width')


def add_ooc_arguments(parser):
    parser.add_argument('--mode', choices=TRAIN_MODES, default='full', help='Exact (full) or out-of-core (ooc) search')
    parser.add_argument('--batch', type=int, default=None, help='Out-of-core batch size B (default 64)')
    parser.add_argument('--rounds', type=int, default=None, help='Out-of-core rounds R (default 50)')
    parser.add_argument('--full-coverage', action='store_true',
                        help='Out-of-core rounds are permutations of the whole training set')


def add_model_arguments(parser):
    parser.add_argument('--model', default='v2vsls',
                        help=f"Model kind: {', '.join(MODEL_KINDS)} (mnknn-vec is accepted)")
    parser.add_argument('--k', type=int, default=None, help='Neighbors K (default 5)')
    parser.add_argument('--tau', type=float, default=None, help='Softmax temperature (default 0.85)')
    parser.add_argument('--alpha', type=float, default=None, help='Ground-truth loss weight (default 9.5)')
    parser.add_argument('--lambda', dest='lam', type=float, default=None, help='Vector loss weight (default 0.12)')
    parser.add_argument('--lr', type=float, default=None, help='Adam learning rate (default 0.01)')
    parser.add_argument('--epochs', type=int, default=None, help='Training epochs (default 30)')
    parser.add_argument('--batch-size', type=int, default=None, help='Minibatch size (default 32)')
    parser.add_argument('--dropout', type=float, default=None, help='Dropout rate (default 0.2)')
    parser.add_argument('--hidden', type=int, default=None, help='LSTM hidden size (default 128)')
    parser.add_argument('--embedding', type=int, default=None, help='Memory embedding size (default 64)')
    parser.add_argument('--memory-size', type=int, default=None, help='Memory slots n (default 64)')
    parser.add_argument('--memory-draws', type=int, default=None, help='Memory batches averaged at inference')
    parser.add_argument('--feed-mode', choices=FEED_MODES, default='predicted', help='Decoder feed during training')
    parser.add_argument('--no-batch-norm', action='store_true', help='Disable batch normalization')
    parser.add_argument('--patience', type=int, default=None, help='Early-stopping patience in epochs')
    parser.add_argument('--validation-fraction', type=float, default=None,
                        help='Held-out share for early stopping, 0 disables (default 0.1)')


def positive_option(options: dict, key: str, default: int) -> int:
    """
    The integer flag ``key``, or ``default`` when it was not given.

    Raises:
        CommandError: If the flag was given with a value below 1
    """
    value = options.get(key)
    if value is None:
        return default
    if value < 1:
        raise CommandError(f"--{key.replace('_', '-')} must be at least 1, got {value}")
    return value


def add_run_arguments(parser, seeds=False):
    parser.add_argument('--seed', type=int, default=None, help='Global seed (default 0)')
    parser.add_argument('--workers', type=int, default=None, help='Threads for neighbor search')
    if seeds:
        parser.add_argument('--seeds', default=None, help='Comma-separated seeds; metrics per seed plus mean')


def ooc_config_from_options(options: dict, k: int, seed: int) -> Optional[OocConfig]:
    """
    OocConfig for --mode ooc, None for --mode full.

    Raises:
        CommandError: If --batch, --rounds or --full-coverage come with --mode full
    """
    if options.get('mode', 'full') == 'full':
        given = [flag for flag, key in (('--batch', 'batch'), ('--rounds', 'rounds')) if options.get(key) is not None]
        if options.get('full_coverage'):
            given.append('--full-coverage')
        if given:
            raise CommandError(f"{', '.join(given)} only apply to --mode ooc")
        return None
    defaults = settings.KNN_DEFAULTS
    cfg = OocConfig(
        batch=defaults['ooc_batch'] if options.get('batch') is None else options['batch'],
        rounds=defaults['ooc_rounds'] if options.get('rounds') is None else options['rounds'],
        seed=seed,
        full_coverage=bool(options.get('full_coverage')),
    )
    cfg.check(k)
    return cfg


def train_config_from_options(options: dict, seed: int, **overrides) -> TrainConfig:
    """TrainConfig from model and run flags; flags left unset fall back to settings."""
    k = positive_option(options, 'k', settings.KNN_DEFAULTS['k'])
    mode = options.get('mode', 'full')
    values = dict(
        kind=normalize_kind(options.get('model') or 'v2vsls'),
        epochs=options.get('epochs'),
        batch_size=options.get('batch_size'),
        lr=options.get('lr'),
        dropout=options.get('dropout'),
        seed=seed,
        tau=options.get('tau'),
        alpha=options.get('alpha'),
        lam=options.get('lam'),
        k=k,
        hidden=options.get('hidden'),
        embedding=options.get('embedding'),
        memory_size=options.get('memory_size'),
        memory_draws=options.get('memory_draws'),
        feed_mode=options.get('feed_mode') or 'predicted',
        batch_norm=not options.get('no_batch_norm', False),
        mode=mode,
        ooc=ooc_config_from_options(options, k, seed),
        patience=options.get('patience'),
        validation_fraction=options.get('validation_fraction'),
        workers=positive_option(options, 'workers', settings.KNN_DEFAULTS['workers']),
    )
    values.update(overrides)
    return TrainConfig.from_settings(**values)


def oversample_config_from_options(options: dict, seed: int) -> OversampleConfig:
    method = options.get('method') or 'smote'
    if method not in OVERSAMPLE_METHODS:
        raise CommandError(f"unknown oversampling method '{method}'")
    return OversampleConfig(
        method=method,
        k=positive_option(options, 'k', settings.KNN_DEFAULTS['k']),
        smote_k=positive_option(options, 'smote_k', settings.KNN_DEFAULTS['smote_k']),
        seed=seed,
        ratio=1.0 if options.get('ratio') is None else options['ratio'],
    )
