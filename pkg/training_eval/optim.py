"""
Bias-corrected Adam.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable

import numpy as np

from diffcore.exceptions import DimensionError, ParameterError
from diffcore.tensor import Parameter


@dataclass
class AdamState:
    """Step counter and first/second moment estimates per parameter name."""

    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8
) -> None:
    """
    One in-place Adam update of every array in ``params``.

    The step counter in ``state`` is advanced before the update, so the
    first call uses t = 1.

    Raises:
        DimensionError: If a gradient's shape differs from its parameter's
    """
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise DimensionError(f"gradient for '{name}' has shape {g.shape}, parameter has {value.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        value -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


class Adam:
    """Adam over a fixed set of Parameters, reading their accumulated ``grad``."""

    def __init__(self, parameters: Iterable[Parameter], lr: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not lr > 0:
            raise ParameterError(f"learning rate must be positive, got {lr}")
        self.parameters = list(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for parameter in self.parameters:
            parameter.zero_grad()

    def step(self) -> None:
        adam_step(
            {p.name: p.data for p in self.parameters},
            {p.name: p.grad for p in self.parameters},
            self.state, self.lr, self.beta1, self.beta2, self.eps,
        )
