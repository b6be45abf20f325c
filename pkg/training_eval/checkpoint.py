"""
In-memory checkpoint: everything needed to rebuild a trained model.
"""
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from diffcore.exceptions import ParameterError
from knn_targets.types import NormalizationStats

from .config import TrainConfig
from .factory import KnnModel, build_model


CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    """
    A trained (or freshly initialized) model with its provenance.

    ``state`` maps parameter and buffer names to arrays in registration
    order: parameters first, then batch-norm running statistics.
    """

    kind: str
    config: TrainConfig
    d: int
    n_classes: int
    label_values: np.ndarray
    state: Dict[str, np.ndarray]
    parameter_names: list
    stats: Optional[NormalizationStats] = None
    version: int = CHECKPOINT_VERSION

    @classmethod
    def from_model(cls, model: KnnModel, config: TrainConfig, label_values: np.ndarray,
                   stats: Optional[NormalizationStats] = None) -> 'Checkpoint':
        return cls(
            kind=model.kind,
            config=config,
            d=model.config.d,
            n_classes=model.config.n_classes,
            label_values=np.asarray(label_values, dtype=np.float64),
            state=model.store.state(),
            parameter_names=model.store.names(),
            stats=stats,
        )

    @property
    def buffer_names(self) -> list:
        parameters = set(self.parameter_names)
        return [name for name in self.state if name not in parameters]

    def build_model(self) -> KnnModel:
        """Rebuild the model and load the stored parameters and buffers."""
        if self.config.kind != self.kind:
            raise ParameterError(f"checkpoint kind '{self.kind}' disagrees with its config '{self.config.kind}'")
        model = build_model(self.config, self.d, self.n_classes)
        model.store.load_state(self.state)
        return model
