"""
Minibatch Adam training with precomputed or per-epoch out-of-core targets.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from diffcore.exceptions import DimensionError, ParameterError
from diffcore.random import stream
from diffcore.tensor import backward
from knn_targets.search import ooc_neighbors_all
from knn_targets.types import Dataset, NeighborTargets
from memnet_knn.models import MEMORY_TAG, MemNetKNN, draw_memory

from .checkpoint import Checkpoint
from .config import TrainConfig
from .evaluation import macro_f1, predict_labels
from .factory import KnnModel, build_model, compute_loss, run_forward
from .optim import Adam

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    validation_f1: Optional[float] = None


@dataclass
class TrainingResult:
    """The checkpoint plus the per-epoch history of the run."""

    checkpoint: Checkpoint
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False
    seconds: float = 0.0

    @property
    def losses(self) -> List[float]:
        return [record.loss for record in self.history]


def split_rows(n: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Shuffle 0..n-1 once and hold out ``floor(fraction * n)`` rows for validation."""
    held_out = int(np.floor(fraction * n))
    if held_out == 0:
        return np.arange(n), np.zeros(0, dtype=np.int64)
    order = stream(seed, 'split').permutation(n)
    return np.sort(order[held_out:]), np.sort(order[:held_out])


def minibatches(rows: np.ndarray, batch_size: int) -> List[np.ndarray]:
    """Consecutive chunks; a trailing single row joins the previous chunk."""
    batches = [rows[i:i + batch_size] for i in range(0, len(rows), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


class Trainer:
    """
    Trains one model kind under a TrainConfig.

    Every random choice (validation split, shuffles, dropout masks, memory
    draws, out-of-core batches) comes from a stream keyed by the run seed,
    so a run is fully determined by (seed, data, config).
    """

    def __init__(self, config: TrainConfig):
        self.config = config

    def train(self, train: Dataset, targets: NeighborTargets) -> TrainingResult:
        """
        Train against precomputed targets aligned with ``train``'s rows.

        Raises:
            DimensionError: If the targets do not match the dataset
        """
        if targets.size != train.size or targets.dim != train.dim:
            raise DimensionError(
                f"targets cover {targets.size} samples of dimension {targets.dim}, "
                f"dataset has {train.size} of dimension {train.dim}"
            )
        if targets.k != self.config.k:
            raise ParameterError(f"targets hold K={targets.k} neighbors, config expects K={self.config.k}")
        return self._fit(train, lambda epoch, rows: targets)

    def train_ooc(self, train: Dataset) -> TrainingResult:
        """Train with targets refreshed every epoch by out-of-core search."""
        cfg = self.config.ooc
        if cfg is None:
            raise ParameterError("out-of-core training needs an OocConfig")
        cfg.check(self.config.k)

        def refresh(epoch: int, rows: np.ndarray) -> NeighborTargets:
            found = ooc_neighbors_all(train, self.config.k, cfg, epoch=epoch, rows=rows, workers=self.config.workers)
            full = NeighborTargets(
                labels=np.zeros((train.size, self.config.k), dtype=np.int64),
                vectors=np.zeros((train.size, self.config.k, train.dim)),
                distances=np.full((train.size, self.config.k), np.inf),
            )
            full.labels[rows] = found.labels
            full.vectors[rows] = found.vectors
            full.distances[rows] = found.distances
            return full

        return self._fit(train, refresh)

    def _fit(self, train: Dataset, targets_for: Callable[[int, np.ndarray], NeighborTargets]) -> TrainingResult:
        config = self.config
        started = time.perf_counter()
        model = build_model(config, train.dim, train.n_classes)
        optimizer = Adam(list(model.store), lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        train_rows, validation_rows = split_rows(train.size, config.validation_fraction, config.seed)
        if len(train_rows) < 2:
            raise ParameterError(f"training needs at least 2 rows after the validation split, got {len(train_rows)}")
        reference = train.subset(train_rows)
        memory_available = len(train_rows) - 1
        if isinstance(model, MemNetKNN) and config.memory_size > memory_available:
            raise ParameterError(
                f"memory of {config.memory_size} slots needs {config.memory_size} other training rows "
                f"outside the validation split, only {memory_available} available"
            )

        result = TrainingResult(checkpoint=None)
        best_f1, best_state, waited = -1.0, None, 0
        logger.info(
            f"Training {config.kind} on {len(train_rows)} samples "
            f"({len(validation_rows)} held out) for up to {config.epochs} epochs"
        )

        for epoch in range(config.epochs):
            targets = targets_for(epoch, train_rows)
            loss = self._run_epoch(model, optimizer, train, targets, train_rows, epoch)
            record = EpochRecord(epoch=epoch, loss=loss)
            result.history.append(record)

            if len(validation_rows):
                predictions = predict_labels(
                    model, train.features[validation_rows], reference, seed=config.seed,
                    memory_draws=config.memory_draws, workers=config.workers,
                )
                record.validation_f1 = macro_f1(predictions, train.labels[validation_rows], train.n_classes)
                if record.validation_f1 > best_f1:
                    best_f1, best_state, waited = record.validation_f1, model.store.state(), 0
                    result.best_epoch = epoch
                else:
                    waited += 1
            logger.info(
                f"Epoch {epoch + 1}/{config.epochs}: loss {loss:.6f}"
                + ('' if record.validation_f1 is None else f", validation macro F-1 {record.validation_f1:.4f}")
            )
            if len(validation_rows) and waited >= config.patience:
                result.stopped_early = True
                logger.info(f"Early stop after epoch {epoch + 1}; best epoch was {result.best_epoch + 1}")
                break

        if best_state is not None:
            model.store.load_state(best_state)
        result.seconds = time.perf_counter() - started
        result.checkpoint = Checkpoint.from_model(model, config, train.label_values, train.stats)
        return result

    def _run_epoch(self, model: KnnModel, optimizer: Adam, train: Dataset, targets: NeighborTargets,
                   rows: np.ndarray, epoch: int) -> float:
        config = self.config
        order = stream(config.seed, 'shuffle', epoch).permutation(rows)
        # memory is drawn from the training rows only
        position = np.full(train.size, -1, dtype=np.int64)
        position[rows] = np.arange(len(rows))
        total, seen = 0.0, 0
        for number, batch in enumerate(minibatches(order, config.batch_size)):
            memory = None
            if isinstance(model, MemNetKNN):
                memory = draw_memory(
                    train.features[rows], config.memory_size, keys=batch, seed=config.seed,
                    tag=MEMORY_TAG, epoch=epoch, exclude=position[batch],
                )
            bundle = run_forward(
                model, train.features[batch], memory=memory, training=True,
                rng=stream(config.seed, 'dropout', epoch, number),
                target_labels=targets.labels[batch], target_vectors=targets.vectors[batch],
            )
            loss = compute_loss(model, bundle, train.labels[batch], targets.labels[batch], targets.vectors[batch])
            optimizer.zero_grad()
            backward(loss)
            optimizer.step()
            total += loss.item() * len(batch)
            seen += len(batch)
        return total / seen


def train(dataset: Dataset, targets: NeighborTargets, config: TrainConfig) -> Checkpoint:
    return Trainer(config).train(dataset, targets).checkpoint


def train_ooc(dataset: Dataset, config: TrainConfig) -> Checkpoint:
    return Trainer(config).train_ooc(dataset).checkpoint
