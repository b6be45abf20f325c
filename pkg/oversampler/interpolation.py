"""
SMOTE and ADASYN: synthetic minority samples on segments between a
minority sample and one of its nearest minority-class neighbors.
"""
import logging

import numpy as np

from diffcore.exceptions import ParameterError
from diffcore.random import stream
from knn_targets.search import batch_query
from knn_targets.types import Dataset

from .types import AugmentedDataset, OversampleConfig, class_deficits

logger = logging.getLogger(__name__)


def interpolate(base: np.ndarray, neighbor: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Points ``base + u * (neighbor - base)``, one row per coefficient in ``u``."""
    return base + u[:, None] * (neighbor - base)


def _class_neighbors(train: Dataset, cls: int, smote_k: int, workers: int = 1):
    rows = np.flatnonzero(train.labels == cls)
    if len(rows) < smote_k + 1:
        raise ParameterError(
            f"class {cls} has {len(rows)} samples, at least smote_k + 1 = {smote_k + 1} are needed"
        )
    features = train.features[rows]
    neighbors, _ = batch_query(features, features, smote_k, exclude=np.arange(len(rows)), workers=workers)
    return rows, neighbors


def _emit(train: Dataset, rows, neighbors, bases, picks, u, cls):
    base_features = train.features[rows[bases]]
    neighbor_features = train.features[rows[neighbors[bases, picks]]]
    return (
        interpolate(base_features, neighbor_features, u),
        np.full(len(bases), cls, dtype=np.int64),
        rows[bases],
        picks + 1,
    )


def _collect(train: Dataset, method: str, parts) -> AugmentedDataset:
    if not parts:
        return AugmentedDataset(original=train, method=method)
    features, labels, sources, ranks = (np.concatenate(column) for column in zip(*parts))
    return AugmentedDataset(
        original=train, method=method, features=features, labels=labels, sources=sources, ranks=ranks
    )


def smote(train: Dataset, cfg: OversampleConfig, workers: int = 1) -> AugmentedDataset:
    """
    SMOTE up to the balance target.

    Class c draws its base samples, neighbor picks and interpolation
    coefficients from ``stream(seed, 'smote', c)``.

    Raises:
        ParameterError: If a class needing synthetics has <= smote_k samples
    """
    parts = []
    for cls, needed in enumerate(class_deficits(train, cfg.ratio)):
        if needed == 0:
            continue
        rows, neighbors = _class_neighbors(train, cls, cfg.smote_k, workers)
        rng = stream(cfg.seed, 'smote', cls)
        bases = rng.integers(len(rows), size=needed)
        picks = rng.integers(cfg.smote_k, size=needed)
        u = rng.random(needed)
        parts.append(_emit(train, rows, neighbors, bases, picks, u, cls))
        logger.info(f"SMOTE: {needed} synthetic samples for class {cls} from {len(rows)} sources")
    return _collect(train, 'smote', parts)


def adasyn_allocation(ratios: np.ndarray, total: int) -> np.ndarray:
    """
    Round each sample's share of ``total`` synthetics.

    Shares are the normalized ratios; with all ratios zero every sample gets
    an equal share.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.size == 0:
        return np.zeros(0, dtype=np.int64)
    if np.any(ratios < 0):
        raise ParameterError("ADASYN ratios must be non-negative")
    mass = ratios.sum()
    if mass == 0:
        logger.warning(
            f"No minority sample has a differently labelled neighbor; spreading {total} synthetics uniformly"
        )
        shares = np.full(ratios.size, 1.0 / ratios.size)
    else:
        shares = ratios / mass
    return np.rint(shares * total).astype(np.int64)


def adasyn(train: Dataset, cfg: OversampleConfig, workers: int = 1) -> AugmentedDataset:
    """
    ADASYN: SMOTE with per-sample budgets weighted by how many of a sample's
    smote_k nearest neighbors (over the whole set) belong to another class.

    Raises:
        ParameterError: If a class needing synthetics has <= smote_k samples
    """
    parts = []
    deficits = class_deficits(train, cfg.ratio)
    if deficits.any() and train.size <= cfg.smote_k:
        raise ParameterError(f"ADASYN needs more than smote_k={cfg.smote_k} samples, got {train.size}")
    for cls, needed in enumerate(deficits):
        if needed == 0:
            continue
        rows, neighbors = _class_neighbors(train, cls, cfg.smote_k, workers)
        around, _ = batch_query(train.features, train.features[rows], cfg.smote_k, exclude=rows, workers=workers)
        ratios = (train.labels[around] != cls).sum(axis=1) / cfg.smote_k
        allocation = adasyn_allocation(ratios, int(needed))
        bases = np.repeat(np.arange(len(rows)), allocation)
        rng = stream(cfg.seed, 'adasyn', cls)
        picks = rng.integers(cfg.smote_k, size=len(bases))
        u = rng.random(len(bases))
        parts.append(_emit(train, rows, neighbors, bases, picks, u, cls))
        logger.info(
            f"ADASYN: {len(bases)} synthetic samples for class {cls} (target {needed}) "
            f"from {int((allocation > 0).sum())} of {len(rows)} sources"
        )
    return _collect(train, 'adasyn', parts)
