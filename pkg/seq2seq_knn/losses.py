"""
Training objectives shared by both model families.

Every loss returns the minibatch mean of the per-sample objective.
"""
import numpy as np

from diffcore.exceptions import DimensionError, ParameterError
from diffcore.ops import kl_divergence, squared_l2
from diffcore.tensor import Tensor

from .models import PredictionBundle


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.eye(n_classes)[np.asarray(labels, dtype=np.int64)]


def _require(bundle: PredictionBundle, labels: bool = False, vectors: bool = False) -> None:
    if labels and not bundle.has_labels:
        raise ParameterError("this loss needs label outputs, the model produced none")
    if vectors and not bundle.has_vectors:
        raise ParameterError("this loss needs vector outputs, the model produced none")


def neighbor_label_term(bundle: PredictionBundle, target_labels: np.ndarray) -> Tensor:
    """(1/K) sum_t KL(onehot(Y^T_t) || Y^P_t), one value per sample."""
    _require(bundle, labels=True)
    target_labels = np.asarray(target_labels)
    k = len(bundle.label_steps)
    if target_labels.shape[1] != k:
        raise DimensionError(f"{target_labels.shape[1]} target ranks given for {k} decoder steps")
    n_classes = bundle.label.shape[-1]
    total = None
    for t, step in enumerate(bundle.label_steps):
        term = kl_divergence(one_hot(target_labels[:, t], n_classes), step)
        total = term if total is None else total + term
    return total * (1.0 / k)


def ground_truth_term(bundle: PredictionBundle, labels: np.ndarray) -> Tensor:
    """KL(onehot(Y^GT) || Y^P), one value per sample."""
    _require(bundle, labels=True)
    return kl_divergence(one_hot(labels, bundle.label.shape[-1]), bundle.label)


def vector_term(bundle: PredictionBundle, target_vectors: np.ndarray) -> Tensor:
    """sum_t ||X^P_t - X^T_t||^2, one value per sample."""
    _require(bundle, vectors=True)
    target_vectors = np.asarray(target_vectors, dtype=np.float64)
    if target_vectors.shape[1] != len(bundle.vector_steps):
        raise DimensionError(
            f"{target_vectors.shape[1]} target vectors given for {len(bundle.vector_steps)} decoder steps"
        )
    total = None
    for t, step in enumerate(bundle.vector_steps):
        term = squared_l2(step, target_vectors[:, t])
        total = term if total is None else total + term
    return total


def loss_v2ls(bundle: PredictionBundle, target_labels, labels, alpha: float) -> Tensor:
    return (neighbor_label_term(bundle, target_labels) + alpha * ground_truth_term(bundle, labels)).mean()


def loss_v2vs(bundle: PredictionBundle, target_vectors) -> Tensor:
    return vector_term(bundle, target_vectors).mean()


def loss_v2vsls(bundle: PredictionBundle, target_labels, target_vectors, labels, alpha: float, lam: float) -> Tensor:
    per_sample = (
        neighbor_label_term(bundle, target_labels)
        + alpha * ground_truth_term(bundle, labels)
        + lam * vector_term(bundle, target_vectors)
    )
    return per_sample.mean()
