"""
Oversampling with a trained vector-predicting model.

The K vectors a model predicts for a minority sample approximate its
nearest neighbors without being training samples; they are admitted as
synthetic samples when the paired label head places them in a class that
still needs samples.
"""
import logging
from typing import Optional

import numpy as np

from diffcore.exceptions import ParameterError
from knn_targets.types import Dataset
from memnet_knn.models import MEMORY_EVAL_TAG, MemNetKNN, draw_memory
from training_eval.checkpoint import Checkpoint
from training_eval.config import OVERSAMPLING_KINDS
from training_eval.evaluation import PREDICTION_BLOCK
from training_eval.factory import run_forward

from .interpolation import adasyn, smote
from .types import AugmentedDataset, OversampleConfig, class_deficits

logger = logging.getLogger(__name__)


def generate_synthetic_model(checkpoint: Checkpoint, train: Dataset, cfg: OversampleConfig) -> AugmentedDataset:
    """
    Walk the minority sources in index order and the decoder steps in order,
    admitting X^P_t labelled argmax(Y^P_t) while that class is below target.

    Stops at balance or when the minority sources run out; ``exhausted``
    records the latter. Synthetic features stay on the model's normalized
    scale, writers de-normalize them with the dataset stats.

    Raises:
        ParameterError: If the model has no vector head or the data does not fit it
    """
    if checkpoint.kind not in OVERSAMPLING_KINDS:
        raise ParameterError(
            f"model kind '{checkpoint.kind}' cannot oversample, expected one of {OVERSAMPLING_KINDS}"
        )
    if checkpoint.d != train.dim or checkpoint.n_classes != train.n_classes:
        raise ParameterError(
            f"checkpoint expects d={checkpoint.d}, C={checkpoint.n_classes}; "
            f"dataset has d={train.dim}, C={train.n_classes}"
        )
    model = checkpoint.build_model()
    deficits = class_deficits(train, cfg.ratio)
    sources = np.flatnonzero(deficits[train.labels] > 0)
    augmented = AugmentedDataset(original=train, method='model')
    if not deficits.any():
        logger.info("Classes are already balanced; no synthetic samples generated")
        return augmented

    features, labels, origin, ranks = [], [], [], []
    for start in range(0, len(sources), PREDICTION_BLOCK):
        rows = sources[start:start + PREDICTION_BLOCK]
        memory = None
        if isinstance(model, MemNetKNN):
            memory = draw_memory(
                train.features, model.config.memory_size, keys=rows, seed=cfg.seed,
                tag=MEMORY_EVAL_TAG, exclude=rows,
            )
        bundle = run_forward(model, train.features[rows], memory=memory)
        vectors, steps = bundle.vectors(), bundle.step_probabilities()
        claimed = np.argmax(steps, axis=2)
        for j, source in enumerate(rows):
            for t in range(min(cfg.k, vectors.shape[1])):
                cls = claimed[j, t]
                if deficits[cls] > 0:
                    deficits[cls] -= 1
                    features.append(vectors[j, t])
                    labels.append(cls)
                    origin.append(source)
                    ranks.append(t + 1)
            if not deficits.any():
                break
        if not deficits.any():
            break

    if features:
        augmented = AugmentedDataset(
            original=train, method='model', features=np.stack(features), labels=labels,
            sources=origin, ranks=ranks,
        )
    augmented.exhausted = bool(deficits.any())
    if augmented.exhausted:
        message = f"Minority sources exhausted with {deficits.tolist()} samples still missing per class"
        augmented.notes.append(message)
        logger.warning(message)
    logger.info(f"Model-based oversampling ({checkpoint.kind}) admitted {augmented.n_synthetic} synthetic samples")
    return augmented


def oversample(train: Dataset, cfg: OversampleConfig, checkpoint: Optional[Checkpoint] = None,
               workers: int = 1) -> AugmentedDataset:
    """Dispatch on ``cfg.method``."""
    if cfg.method == 'model':
        if checkpoint is None:
            raise ParameterError("model-based oversampling needs a trained checkpoint")
        return generate_synthetic_model(checkpoint, train, cfg)
    if cfg.method == 'smote':
        return smote(train, cfg, workers)
    return adasyn(train, cfg, workers)
