"""
Label inference, classification metrics, plain kNN baselines and the
neighbor-order ablation.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from diffcore.exceptions import DimensionError, ParameterError
from knn_targets.search import OOC_QUERY_TAG, batch_query, ooc_query
from knn_targets.types import Dataset, NeighborTargets, OocConfig
from memnet_knn.models import MEMORY_EVAL_TAG, MemNetKNN, draw_memory

from .factory import KnnModel, run_forward

logger = logging.getLogger(__name__)


PREDICTION_BLOCK = 1024


def majority_vote(labels: np.ndarray, distances: np.ndarray, n_classes: int) -> np.ndarray:
    """
    Plurality label per row.

    Ties go to the class whose voters have the smallest summed distance,
    then to the lower class id.
    """
    labels = np.asarray(labels, dtype=np.int64)
    distances = np.asarray(distances, dtype=np.float64)
    if labels.shape != distances.shape or labels.ndim != 2:
        raise DimensionError(f"vote labels {labels.shape} and distances {distances.shape} must be equal 2-D shapes")
    m = labels.shape[0]
    rows = np.repeat(np.arange(m), labels.shape[1])
    counts = np.zeros((m, n_classes), dtype=np.int64)
    summed = np.zeros((m, n_classes))
    np.add.at(counts, (rows, labels.reshape(-1)), 1)
    np.add.at(summed, (rows, labels.reshape(-1)), distances.reshape(-1))
    leading = counts == counts.max(axis=1, keepdims=True)
    return np.argmin(np.where(leading, summed, np.inf), axis=1)


def predict_proba(
    model: KnnModel,
    features: np.ndarray,
    reference: Dataset,
    seed: int = 0,
    memory_draws: int = 1
) -> np.ndarray:
    """
    Final label distributions Y^P [m x C] in evaluation mode.

    Memory networks average Y^P over ``memory_draws`` independent memory
    batches drawn from ``reference``.
    """
    if not model.predicts_labels:
        raise ParameterError(f"model kind '{model.kind}' has no label head")
    features = np.atleast_2d(features)
    out = np.empty((features.shape[0], model.config.n_classes))
    for start in range(0, features.shape[0], PREDICTION_BLOCK):
        block = features[start:start + PREDICTION_BLOCK]
        keys = np.arange(start, start + len(block))
        if isinstance(model, MemNetKNN):
            total = np.zeros((len(block), model.config.n_classes))
            for draw in range(memory_draws):
                memory = draw_memory(
                    reference.features, model.config.memory_size, keys, seed, tag=MEMORY_EVAL_TAG, epoch=draw
                )
                total += run_forward(model, block, memory=memory).probabilities()
            out[start:start + len(block)] = total / memory_draws
        else:
            out[start:start + len(block)] = run_forward(model, block).probabilities()
    return out


def predict_labels(
    model: KnnModel,
    features: np.ndarray,
    reference: Dataset,
    seed: int = 0,
    memory_draws: int = 1,
    workers: int = 1
) -> np.ndarray:
    """
    Class ids for every row of ``features``.

    v2vs looks up the 1-nearest reference sample of each predicted vector and
    votes; every other kind takes the argmax of Y^P.

    Raises:
        ParameterError: If v2vs voting has an empty reference set
    """
    features = np.atleast_2d(features)
    if model.kind != 'v2vs':
        return np.argmax(predict_proba(model, features, reference, seed, memory_draws), axis=1)

    if reference.size == 0:
        raise ParameterError("v2vs voting needs a non-empty training set")
    predictions = np.empty(features.shape[0], dtype=np.int64)
    for start in range(0, features.shape[0], PREDICTION_BLOCK):
        vectors = run_forward(model, features[start:start + PREDICTION_BLOCK]).vectors()
        m, k, d = vectors.shape
        indices, distances = batch_query(reference.features, vectors.reshape(m * k, d), 1, workers=workers)
        votes = reference.labels[indices[:, 0]].reshape(m, k)
        predictions[start:start + m] = majority_vote(votes, distances[:, 0].reshape(m, k), model.config.n_classes)
    return predictions


def predict_label(checkpoint, x: np.ndarray, train: Dataset, seed: int = 0, memory_draws: int = 1) -> int:
    """Class id of a single normalized vector under a checkpoint."""
    return int(predict_labels(checkpoint.build_model(), np.asarray(x)[None, :], train, seed, memory_draws)[0])


@dataclass
class Metrics:
    """Classification quality on one labelled set."""

    macro_f1: float
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray
    preparation_seconds: Optional[float] = None
    training_seconds: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        record = {
            'macro_f1': self.macro_f1,
            'accuracy': self.accuracy,
            'precision': self.precision.tolist(),
            'recall': self.recall.tolist(),
            'f1': self.f1.tolist(),
            'confusion': self.confusion.tolist(),
        }
        record.update(self.extra)
        if include_timings:
            record['preparation_seconds'] = self.preparation_seconds
            record['training_seconds'] = self.training_seconds
        return record


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    return np.divide(numerator, denominator, out=np.zeros(len(numerator)), where=denominator > 0)


def classification_metrics(predictions: np.ndarray, labels: np.ndarray, n_classes: int) -> Metrics:
    """
    Confusion matrix (rows: true class, columns: predicted) and per-class scores.

    Raises:
        ParameterError: If the inputs are empty or differ in length
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ParameterError(f"{len(predictions)} predictions given for {len(labels)} labels")
    if labels.size == 0:
        raise ParameterError("cannot score an empty prediction set")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    tp = np.diag(confusion).astype(np.float64)
    precision = _safe_ratio(tp, confusion.sum(axis=0).astype(np.float64))
    recall = _safe_ratio(tp, confusion.sum(axis=1).astype(np.float64))
    f1 = _safe_ratio(2.0 * precision * recall, precision + recall)
    absent = np.flatnonzero(confusion.sum(axis=1) == 0)
    if absent.size:
        logger.warning(f"Classes {absent.tolist()} do not occur in the evaluation labels")
    return Metrics(
        macro_f1=float(f1.mean()),
        accuracy=float(tp.sum() / labels.size),
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=confusion,
    )


def macro_f1(predictions: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    return classification_metrics(predictions, labels, n_classes).macro_f1


def evaluate_model(
    model: KnnModel,
    test: Dataset,
    reference: Dataset,
    seed: int = 0,
    memory_draws: int = 1,
    workers: int = 1
) -> Metrics:
    predictions = predict_labels(model, test.features, reference, seed, memory_draws, workers)
    return classification_metrics(predictions, test.labels, model.config.n_classes)


def baseline_knn_classify(
    train: Dataset,
    test: Dataset,
    k: int,
    mode: str = 'full',
    ooc: Optional[OocConfig] = None,
    workers: int = 1
) -> Metrics:
    """
    Plain kNN: majority vote over exact (full) or out-of-core (ooc) neighbors.

    In ooc mode test query j samples its batches from its own stream, so
    results do not depend on worker count.
    """
    if train.size == 0:
        raise ParameterError("kNN baseline needs a non-empty training set")
    if mode == 'full':
        indices, distances = batch_query(train.features, test.features, k, workers=workers)
    elif mode == 'ooc':
        ooc = ooc or OocConfig()
        indices, distances = ooc_query(
            train.features, test.features, k, ooc, keys=np.arange(test.size), tag=OOC_QUERY_TAG, workers=workers
        )
    else:
        raise ParameterError(f"unknown kNN mode '{mode}', expected 'full' or 'ooc'")
    predictions = majority_vote(train.labels[indices], distances, train.n_classes)
    metrics = classification_metrics(predictions, test.labels, train.n_classes)
    logger.info(f"kNN baseline ({mode}, K={k}) on {test.size} samples: macro F-1 {metrics.macro_f1:.4f}")
    return metrics


def swap_targets_ablation(targets: NeighborTargets, i: int, j: int) -> NeighborTargets:
    """
    Swap neighbor ranks i and j (1-based) in every sample's targets.

    Raises:
        ParameterError: If a rank is outside 1..K
    """
    for rank in (i, j):
        if not 1 <= rank <= targets.k:
            raise ParameterError(f"rank {rank} is outside 1..{targets.k}")
    order = np.arange(targets.k)
    order[[i - 1, j - 1]] = order[[j - 1, i - 1]]
    return NeighborTargets(
        labels=targets.labels[:, order],
        vectors=targets.vectors[:, order],
        distances=targets.distances[:, order],
        indices=None if targets.indices is None else targets.indices[:, order],
    )
