"""
Training configuration and the catalogue of model kinds.
"""
from dataclasses import asdict, dataclass, fields
from typing import Optional

from django.conf import settings

from diffcore.exceptions import ParameterError
from knn_targets.types import OocConfig
from memnet_knn.models import MEMNET_KINDS
from seq2seq_knn.models import SEQ2SEQ_KINDS


MODEL_KINDS = SEQ2SEQ_KINDS + MEMNET_KINDS
VECTOR_KINDS = ('v2vs', 'v2vsls', 'mnknn_vec')
OVERSAMPLING_KINDS = ('v2vsls', 'mnknn_vec')
TRAIN_MODES = ('full', 'ooc')


def normalize_kind(kind: str) -> str:
    """Accept the command-line spelling ``mnknn-vec`` as well as ``mnknn_vec``."""
    kind = kind.strip().lower().replace('-', '_')
    if kind not in MODEL_KINDS:
        raise ParameterError(f"unknown model kind '{kind}', expected one of {MODEL_KINDS}")
    return kind


@dataclass
class TrainConfig:
    """
    Everything that determines a training run.

    Defaults come from ``settings.KNN_DEFAULTS`` through ``from_settings``;
    the dataclass defaults are the same values.
    """

    kind: str = 'v2vsls'
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout: float = 0.2
    seed: int = 0
    tau: float = 0.85
    alpha: float = 9.5
    lam: float = 0.12
    k: int = 5
    hidden: int = 128
    embedding: int = 64
    memory_size: int = 64
    memory_draws: int = 1
    feed_mode: str = 'predicted'
    batch_norm: bool = True
    mode: str = 'full'
    ooc: Optional[OocConfig] = None
    patience: int = 5
    validation_fraction: float = 0.1
    workers: int = 1

    def __post_init__(self):
        self.kind = normalize_kind(self.kind)
        if self.epochs < 0:
            raise ParameterError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"minibatch size must be positive, got {self.batch_size}")
        if not self.lr > 0:
            raise ParameterError(f"learning rate must be positive, got {self.lr}")
        if self.mode not in TRAIN_MODES:
            raise ParameterError(f"unknown training mode '{self.mode}', expected one of {TRAIN_MODES}")
        if self.k < 1:
            raise ParameterError(f"K must be at least 1, got {self.k}")
        if self.mode == 'ooc' and self.ooc is None:
            self.ooc = OocConfig(seed=self.seed)
        if self.ooc is not None:
            self.ooc.check(self.k)
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ParameterError(f"validation fraction must lie in [0, 1), got {self.validation_fraction}")
        if self.memory_draws < 1 or self.patience < 1 or self.workers < 1:
            raise ParameterError("memory draws, patience and workers must be positive")

    @classmethod
    def from_settings(cls, **overrides) -> 'TrainConfig':
        """Build a config from the project defaults, then apply ``overrides``."""
        defaults = settings.KNN_DEFAULTS
        values = {
            'epochs': defaults['epochs'],
            'batch_size': defaults['batch_size'],
            'lr': defaults['lr'],
            'dropout': defaults['dropout'],
            'seed': defaults['seed'],
            'tau': defaults['tau'],
            'alpha': defaults['alpha'],
            'lam': defaults['lambda'],
            'k': defaults['k'],
            'hidden': defaults['hidden'],
            'embedding': defaults['embedding'],
            'memory_size': defaults['memory_size'],
            'memory_draws': defaults['memory_draws'],
            'patience': defaults['patience'],
            'validation_fraction': defaults['validation_fraction'],
            'workers': defaults['workers'],
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    @property
    def is_memory_network(self) -> bool:
        return self.kind in MEMNET_KINDS

    def to_dict(self) -> dict:
        record = asdict(self)
        record['ooc'] = None if self.ooc is None else asdict(self.ooc)
        return record

    @classmethod
    def from_dict(cls, record: dict) -> 'TrainConfig':
        known = {f.name for f in fields(cls)}
        values = {key: value for key, value in record.items() if key in known}
        if values.get('ooc') is not None:
            values['ooc'] = OocConfig(**values['ooc'])
        return cls(**values)
