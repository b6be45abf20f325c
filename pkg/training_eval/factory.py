"""
Model construction and the per-kind forward/loss dispatch used by training
and evaluation.
"""
from typing import Optional, Union

import numpy as np

from diffcore.tensor import Tensor
from memnet_knn.losses import loss_memn2n, loss_mnknn, loss_mnknn_vec
from memnet_knn.models import MemNetConfig, MemNetKNN, MemoryBatch
from seq2seq_knn.losses import loss_v2ls, loss_v2vs, loss_v2vsls
from seq2seq_knn.models import PredictionBundle, Seq2SeqConfig, Seq2SeqKNN

from .config import TrainConfig

KnnModel = Union[Seq2SeqKNN, MemNetKNN]


def build_model(config: TrainConfig, d: int, n_classes: int) -> KnnModel:
    """Freshly initialized model of ``config.kind`` for d features and C classes."""
    if config.is_memory_network:
        return MemNetKNN(MemNetConfig(
            kind=config.kind,
            d=d,
            n_classes=n_classes,
            k=config.k,
            memory_size=config.memory_size,
            embedding=config.embedding,
            tau=config.tau,
            alpha=config.alpha,
            lam=config.lam,
            dropout=config.dropout,
            batch_norm=config.batch_norm,
            seed=config.seed,
        ))
    return Seq2SeqKNN(Seq2SeqConfig(
        kind=config.kind,
        d=d,
        n_classes=n_classes,
        k=config.k,
        hidden=config.hidden,
        tau=config.tau,
        alpha=config.alpha,
        lam=config.lam,
        dropout=config.dropout,
        feed_mode=config.feed_mode,
        batch_norm=config.batch_norm,
        seed=config.seed,
    ))


def run_forward(
    model: KnnModel,
    x: np.ndarray,
    memory: Optional[MemoryBatch] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    target_labels: Optional[np.ndarray] = None,
    target_vectors: Optional[np.ndarray] = None
) -> PredictionBundle:
    if isinstance(model, MemNetKNN):
        return model.forward(x, memory, training=training, rng=rng)
    return model.forward(x, training=training, rng=rng, target_labels=target_labels, target_vectors=target_vectors)


def compute_loss(
    model: KnnModel,
    bundle: PredictionBundle,
    labels: np.ndarray,
    target_labels: np.ndarray,
    target_vectors: np.ndarray
) -> Tensor:
    """Minibatch-mean objective of the model's kind."""
    kind = model.kind
    alpha, lam = model.config.alpha, model.config.lam
    if kind == 'v2ls':
        return loss_v2ls(bundle, target_labels, labels, alpha)
    if kind == 'v2vs':
        return loss_v2vs(bundle, target_vectors)
    if kind == 'v2vsls':
        return loss_v2vsls(bundle, target_labels, target_vectors, labels, alpha, lam)
    if kind == 'mnknn':
        return loss_mnknn(bundle, target_labels, labels, alpha)
    if kind == 'mnknn_vec':
        return loss_mnknn_vec(bundle, target_labels, target_vectors, labels, alpha, lam)
    return loss_memn2n(bundle, labels)
