"""
Oversampling configuration and the augmented dataset it produces.
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from diffcore.exceptions import DimensionError, ParameterError
from knn_targets.types import Dataset


OVERSAMPLE_METHODS = ('model', 'smote', 'adasyn')


@dataclass
class OversampleConfig:
    """
    How synthetic minority samples are generated.

    ``k`` is the number of synthetics a model proposes per source sample;
    ``smote_k`` is the neighbor count of SMOTE and ADASYN. Generation stops
    once every class reaches ``ratio`` times the majority count.
    """

    method: str = 'smote'
    k: int = 5
    smote_k: int = 5
    seed: int = 0
    ratio: float = 1.0

    def __post_init__(self):
        self.method = self.method.strip().lower()
        if self.method not in OVERSAMPLE_METHODS:
            raise ParameterError(f"unknown oversampling method '{self.method}', expected one of {OVERSAMPLE_METHODS}")
        if self.k < 1 or self.smote_k < 1:
            raise ParameterError(f"K and smote_k must be at least 1, got {self.k} and {self.smote_k}")
        if not 0.0 < self.ratio <= 1.0:
            raise ParameterError(f"balance ratio must lie in (0, 1], got {self.ratio}")


def class_deficits(dataset: Dataset, ratio: float = 1.0) -> np.ndarray:
    """Synthetic samples each class needs to reach ``ratio`` x the majority count."""
    counts = dataset.class_counts()
    goal = int(np.floor(ratio * counts.max() + 0.5))
    return np.maximum(goal - counts, 0)


@dataclass
class AugmentedDataset:
    """
    The original dataset followed by synthetic rows.

    Synthetic row j came from original row ``sources[j]``; ``ranks[j]`` is
    the decoder step (model) or neighbor rank (SMOTE, ADASYN), 1-based.
    """

    original: Dataset
    method: str
    features: np.ndarray = None
    labels: np.ndarray = None
    sources: np.ndarray = None
    ranks: np.ndarray = None
    exhausted: bool = False
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        d = self.original.dim
        self.features = np.zeros((0, d)) if self.features is None else np.asarray(self.features, dtype=np.float64)
        self.labels = np.zeros(0, dtype=np.int64) if self.labels is None else np.asarray(self.labels, dtype=np.int64)
        self.sources = np.zeros(0, dtype=np.int64) if self.sources is None else np.asarray(self.sources, dtype=np.int64)
        self.ranks = np.zeros(0, dtype=np.int64) if self.ranks is None else np.asarray(self.ranks, dtype=np.int64)
        n = len(self.labels)
        if self.features.shape != (n, d) or self.sources.shape != (n,) or self.ranks.shape != (n,):
            raise DimensionError(
                f"synthetic rows disagree: features {self.features.shape}, labels {n}, "
                f"sources {self.sources.shape}, ranks {self.ranks.shape}"
            )

    @property
    def n_synthetic(self) -> int:
        return len(self.labels)

    def class_counts(self) -> np.ndarray:
        return self.original.class_counts() + np.bincount(self.labels, minlength=self.original.n_classes)

    def combined(self) -> Dataset:
        """Original and synthetic rows as one dataset, originals first."""
        return Dataset(
            features=np.concatenate([self.original.features, self.features]),
            labels=np.concatenate([self.original.labels, self.labels]),
            n_classes=self.original.n_classes,
            stats=self.original.stats,
            label_values=self.original.label_values,
            feature_names=self.original.feature_names,
        )

    def origins(self) -> List[str]:
        synthetic = [f'{self.method}:{s}:{r}' for s, r in zip(self.sources.tolist(), self.ranks.tolist())]
        return ['original'] * self.original.size + synthetic
