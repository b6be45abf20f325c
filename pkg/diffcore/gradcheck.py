"""
Central finite-difference gradient checking.
"""
from typing import Callable, Dict, Iterable

import numpy as np

from .tensor import Parameter, Tensor, backward


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest absolute difference scaled by the largest gradient magnitude."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-6)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numerical_gradient(loss_fn: Callable[[], Tensor], parameter: Parameter, step: float = 1e-4) -> np.ndarray:
    """Central differences of ``loss_fn`` with respect to every entry of ``parameter``."""
    grad = np.zeros_like(parameter.data)
    flat = parameter.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = loss_fn().item()
        flat[i] = original - step
        lower = loss_fn().item()
        flat[i] = original
        flat_grad[i] = (upper - lower) / (2.0 * step)
    return grad


def check_gradients(
    loss_fn: Callable[[], Tensor],
    parameters: Iterable[Parameter],
    step: float = 1e-4
) -> Dict[str, float]:
    """
    Compare reverse-mode gradients with central differences.

    ``loss_fn`` must be deterministic (no dropout, fixed memory) because it is
    evaluated many times.

    Returns:
        Mapping of parameter name to relative error
    """
    parameters = list(parameters)
    for parameter in parameters:
        parameter.zero_grad()
    backward(loss_fn())
    analytic = {p.name: p.grad.copy() for p in parameters}
    return {
        p.name: relative_error(analytic[p.name], numerical_gradient(loss_fn, p, step))
        for p in parameters
    }
