"""
Data containers for datasets and nearest-neighbor targets.
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from diffcore.exceptions import DimensionError, ParameterError


@dataclass
class NormalizationStats:
    """Per-feature z-score statistics fitted on a training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DimensionError(f"normalization mean {self.mean.shape} and std {self.std.shape} must be equal 1-D shapes")


@dataclass
class Dataset:
    """
    An N x d feature matrix with integer class labels in 0..C-1.

    ``label_values`` maps class ids back to the labels found in the source
    file; ``stats`` records the normalization applied to ``features``.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    stats: Optional[NormalizationStats] = None
    label_values: Optional[np.ndarray] = None
    feature_names: Optional[List[str]] = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DimensionError(f"features must be a 2-D matrix, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DimensionError(
                f"{self.labels.shape[0]} labels given for {self.features.shape[0]} feature rows"
            )
        if self.n_classes < 2:
            raise ParameterError(f"at least 2 classes are required, got {self.n_classes}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ParameterError(f"labels must lie in 0..{self.n_classes - 1}")
        if self.label_values is None:
            self.label_values = np.arange(self.n_classes, dtype=np.float64)
        if self.feature_names is not None and len(self.feature_names) != self.features.shape[1]:
            raise DimensionError(f"{len(self.feature_names)} feature names given for {self.features.shape[1]} columns")

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, rows: np.ndarray) -> 'Dataset':
        return Dataset(
            features=self.features[rows],
            labels=self.labels[rows],
            n_classes=self.n_classes,
            stats=self.stats,
            label_values=self.label_values,
            feature_names=self.feature_names,
        )


@dataclass
class NeighborTargets:
    """
    Ordered K nearest neighbors of every sample.

    Row i holds the labels, feature vectors and distances of sample i's
    neighbors, nearest first. ``indices`` (source rows) is kept in memory
    when known; it is not part of the targets file.
    """

    labels: np.ndarray
    vectors: np.ndarray
    distances: np.ndarray
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.distances = np.asarray(self.distances, dtype=np.float64)
        n, k = self.labels.shape
        if self.vectors.shape[:2] != (n, k) or self.distances.shape != (n, k):
            raise DimensionError(
                f"targets disagree: labels {self.labels.shape}, vectors {self.vectors.shape}, "
                f"distances {self.distances.shape}"
            )
        if self.indices is not None:
            self.indices = np.asarray(self.indices, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    @property
    def k(self) -> int:
        return self.labels.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]

    def subset(self, rows: np.ndarray) -> 'NeighborTargets':
        return NeighborTargets(
            labels=self.labels[rows],
            vectors=self.vectors[rows],
            distances=self.distances[rows],
            indices=None if self.indices is None else self.indices[rows],
        )


@dataclass
class OocConfig:
    """
    Out-of-core sampling: R rounds of B random training rows per sample.

    Each round holds B distinct rows drawn uniformly; a row may be drawn
    again in a later round. With ``full_coverage`` each round is a random
    permutation of the training set truncated to B rows, which is the whole
    set when B >= N.
    """

    batch: int = 64
    rounds: int = 50
    seed: int = 0
    full_coverage: bool = False

    def __post_init__(self):
        if self.rounds < 1:
            raise ParameterError(f"out-of-core rounds must be at least 1, got {self.rounds}")
        if self.batch < 1:
            raise ParameterError(f"out-of-core batch must be positive, got {self.batch}")

    def check(self, k: int) -> None:
        if self.batch <= k:
            raise ParameterError(f"out-of-core batch B={self.batch} must exceed K={k}")


@dataclass
class CandidateList:
    """Running neighbor candidates, sorted by (distance, source index)."""

    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    distances: np.ndarray = field(default_factory=lambda: np.zeros(0))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    vectors: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.indices)
