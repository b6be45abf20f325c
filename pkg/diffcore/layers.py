"""
Parameter bookkeeping and the small stateful layers built on the primitives.
"""
from dataclasses import dataclass
from typing import Dict, Iterator, List, Tuple

import numpy as np

from .exceptions import DimensionError, ParameterError
from .ops import batch_norm
from .tensor import Parameter, Tensor


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform values in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class ParameterStore:
    """
    Ordered registry of a model's named parameters and non-trainable buffers.

    Names are unique; insertion order is the serialization order.
    """

    def __init__(self):
        self._parameters: Dict[str, Parameter] = {}
        self._buffers: Dict[str, np.ndarray] = {}

    def create(self, name: str, data: np.ndarray) -> Parameter:
        if name in self._parameters:
            raise ParameterError(f"parameter '{name}' is already registered")
        parameter = Parameter(name, np.array(data, dtype=np.float64))
        self._parameters[name] = parameter
        return parameter

    def buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        if name in self._buffers:
            raise ParameterError(f"buffer '{name}' is already registered")
        array = np.array(data, dtype=np.float64)
        self._buffers[name] = array
        return array

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._parameters.values())

    def __len__(self) -> int:
        return len(self._parameters)

    def __getitem__(self, name: str) -> Parameter:
        return self._parameters[name]

    def names(self) -> List[str]:
        return list(self._parameters)

    def zero_grad(self) -> None:
        for parameter in self._parameters.values():
            parameter.zero_grad()

    def state(self) -> Dict[str, np.ndarray]:
        """Copy of every parameter and buffer, parameters first."""
        state = {name: p.data.copy() for name, p in self._parameters.items()}
        state.update({name: b.copy() for name, b in self._buffers.items()})
        return state

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        """
        Overwrite parameters and buffers in place.

        Raises:
            ParameterError: If a name is missing or unexpected
            DimensionError: If a stored shape differs from the registered one
        """
        expected = set(self._parameters) | set(self._buffers)
        missing = expected - set(state)
        unexpected = set(state) - expected
        if missing or unexpected:
            raise ParameterError(
                f"state does not match model: missing {sorted(missing)}, unexpected {sorted(unexpected)}"
            )
        for name, values in state.items():
            target = self._parameters[name].data if name in self._parameters else self._buffers[name]
            if target.shape != values.shape:
                raise DimensionError(f"'{name}' has shape {target.shape}, stored shape is {values.shape}")
            target[...] = values


@dataclass
class LSTMParameters:
    """Weights of one LSTM cell, gates laid out as [input | forget | candidate | output]."""

    W_x: Parameter
    W_h: Parameter
    b: Parameter

    @property
    def input_size(self) -> int:
        return self.W_x.shape[0]

    @property
    def hidden(self) -> int:
        return self.W_h.shape[0]

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, input_size: int, hidden: int,
               rng: np.random.Generator) -> 'LSTMParameters':
        fan_in = input_size + hidden
        return cls(
            W_x=store.create(f'{prefix}.W_x', uniform_init(rng, (input_size, 4 * hidden), fan_in)),
            W_h=store.create(f'{prefix}.W_h', uniform_init(rng, (hidden, 4 * hidden), fan_in)),
            b=store.create(f'{prefix}.b', uniform_init(rng, (4 * hidden,), fan_in)),
        )


class BatchNorm:
    """Batch normalization with learned scale/shift and running statistics."""

    def __init__(self, store: ParameterStore, prefix: str, size: int):
        if size < 1:
            raise DimensionError(f"batch norm size must be positive, got {size}")
        self.gamma = store.create(f'{prefix}.gamma', np.ones(size))
        self.beta = store.create(f'{prefix}.beta', np.zeros(size))
        self.running_mean = store.buffer(f'{prefix}.running_mean', np.zeros(size))
        self.running_var = store.buffer(f'{prefix}.running_var', np.ones(size))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, training)
