"""
Differentiable primitives used by the sequence and memory models.

All functions accept tensors whose leading axes are batch axes; the last axis
is the feature/class axis. Losses reduce over the last axis only, leaving one
value per batch row (a scalar for unbatched input).
"""
from typing import Optional

import numpy as np

from .exceptions import BatchSizeError, DimensionError, DistributionError, ParameterError
from .tensor import ArrayLike, Tensor, as_tensor, result


ACTIVATIONS = ('relu', 'tanh', 'sigmoid')

KL_EPSILON = 1e-12
DISTRIBUTION_TOLERANCE = 1e-6
BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5


def affine(x: ArrayLike, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """
    out[..., j] = sum_k x[..., k] * W[k, j] + b[j]

    Raises:
        DimensionError: If the inner dimensions or the bias length disagree
    """
    x = as_tensor(x)
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise DimensionError(f"affine: input shape {x.shape} does not match weight shape {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise DimensionError(f"affine: bias shape {b.shape} does not match weight shape {W.shape}")

    data = x.data @ W.data
    if b is not None:
        data = data + b.data
    p, q = W.shape

    def backward(g):
        flat_x = x.data.reshape(-1, p)
        flat_g = g.reshape(-1, q)
        grads = [g @ W.data.T, flat_x.T @ flat_g]
        if b is not None:
            grads.append(flat_g.sum(axis=0))
        return tuple(grads)

    parents = (x, W) if b is None else (x, W, b)
    return result(data, parents, backward, 'affine')


def activation(x: ArrayLike, kind: str) -> Tensor:
    """Elementwise relu, tanh or sigmoid; relu'(0) is taken as 0."""
    x = as_tensor(x)
    if kind == 'relu':
        mask = x.data > 0
        data = np.where(mask, x.data, 0.0)
        return result(data, (x,), lambda g: (g * mask,), 'relu')
    if kind == 'tanh':
        data = np.tanh(x.data)
        return result(data, (x,), lambda g: (g * (1.0 - data * data),), 'tanh')
    if kind == 'sigmoid':
        data = 0.5 * (1.0 + np.tanh(0.5 * x.data))
        return result(data, (x,), lambda g: (g * data * (1.0 - data),), 'sigmoid')
    raise ParameterError(f"unknown activation '{kind}', expected one of {ACTIVATIONS}")


def softmax_with_temperature(z: ArrayLike, tau: float = 1.0) -> Tensor:
    """
    p_i = exp((z_i - max z) / tau) / sum_j exp((z_j - max z) / tau) along the last axis.

    Raises:
        ParameterError: If tau is not positive
    """
    if not tau > 0:
        raise ParameterError(f"softmax temperature must be positive, got {tau}")
    z = as_tensor(z)
    shifted = (z.data - z.data.max(axis=-1, keepdims=True)) / tau
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)) / tau,)

    return result(p, (z,), backward, 'softmax')


def _check_distribution(values: np.ndarray, role: str) -> None:
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise DistributionError(f"{role} must be non-negative and finite")
    sums = values.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > DISTRIBUTION_TOLERANCE):
        worst = float(sums.reshape(-1)[np.argmax(np.abs(sums - 1.0).reshape(-1))])
        raise DistributionError(f"{role} must sum to 1 within {DISTRIBUTION_TOLERANCE}, found a sum of {worst}")


def kl_divergence(target: ArrayLike, pred: ArrayLike, eps: float = KL_EPSILON) -> Tensor:
    """
    sum_i target_i * log(target_i / max(pred_i, eps)) along the last axis.

    Terms with target_i = 0 contribute 0. Only ``pred`` receives a gradient.

    Raises:
        DistributionError: If either input is not a distribution
        DimensionError: If the shapes differ
    """
    target_data = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    pred = as_tensor(pred)
    if target_data.shape != pred.shape:
        raise DimensionError(f"kl_divergence: target shape {target_data.shape} differs from prediction shape {pred.shape}")
    _check_distribution(target_data, 'KL target')
    _check_distribution(pred.data, 'KL prediction')

    clamped = np.maximum(pred.data, eps)
    positive = target_data > 0
    safe_target = np.where(positive, target_data, 1.0)
    terms = np.where(positive, target_data * (np.log(safe_target) - np.log(clamped)), 0.0)
    data = terms.sum(axis=-1)

    def backward(g):
        local = np.where(pred.data > eps, -target_data / clamped, 0.0)
        return (local * np.expand_dims(g, -1),)

    return result(data, (pred,), backward, 'kl')


def squared_l2(a: ArrayLike, b: ArrayLike) -> Tensor:
    """sum_i (a_i - b_i)^2 along the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"squared_l2: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    data = (diff * diff).sum(axis=-1)

    def backward(g):
        ga = 2.0 * diff * np.expand_dims(g, -1)
        return ga, -ga

    return result(data, (a, b), backward, 'squared_l2')


def lstm_cell_step(x_t: ArrayLike, h_prev: ArrayLike, c_prev: ArrayLike, params) -> tuple:
    """
    One LSTM step with input, forget and output sigmoid gates and a tanh candidate.

    Args:
        x_t: Input [..., input_size]
        h_prev: Previous hidden state [..., hidden]
        c_prev: Previous cell state [..., hidden]
        params: LSTMParameters (W_x, W_h, b laid out as [i | f | g | o])

    Returns:
        Tuple of (h, c)
    """
    x_t, h_prev, c_prev = as_tensor(x_t), as_tensor(h_prev), as_tensor(c_prev)
    hidden = params.hidden
    if x_t.shape[-1] != params.input_size:
        raise DimensionError(f"lstm: input shape {x_t.shape} does not match input size {params.input_size}")
    if h_prev.shape[-1] != hidden or c_prev.shape != h_prev.shape:
        raise DimensionError(
            f"lstm: state shapes {h_prev.shape}/{c_prev.shape} do not match hidden size {hidden}"
        )

    gates = affine(x_t, params.W_x, params.b) + affine(h_prev, params.W_h)
    i = activation(gates[..., 0:hidden], 'sigmoid')
    f = activation(gates[..., hidden:2 * hidden], 'sigmoid')
    g = activation(gates[..., 2 * hidden:3 * hidden], 'tanh')
    o = activation(gates[..., 3 * hidden:4 * hidden], 'sigmoid')
    c = f * c_prev + i * g
    h = o * activation(c, 'tanh')
    return h, c


def dropout(x: ArrayLike, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Inverted dropout: in training, zero each element with probability ``rate``
    and scale survivors by 1/(1 - rate); identity otherwise.
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ParameterError("dropout in training mode needs a random stream")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return result(x.data * mask, (x,), lambda g: (g * mask,), 'dropout')


def batch_norm(
    x: ArrayLike,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPSILON
) -> Tensor:
    """
    Per-column normalization of an [m x q] batch.

    Training mode normalizes by the batch statistics and updates the running
    statistics in place (unbiased variance); evaluation mode uses the running
    statistics.

    Raises:
        BatchSizeError: If fewer than two rows are given in training mode
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != gamma.shape[0]:
        raise DimensionError(f"batch_norm: input shape {x.shape} does not match {gamma.shape[0]} columns")

    if training:
        m = x.shape[0]
        if m < 2:
            raise BatchSizeError(f"batch_norm needs at least 2 rows in training mode, got {m}")
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * m / (m - 1)
    else:
        mean, var = running_mean.copy(), running_var.copy()

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean) * inv_std
    data = gamma.data * x_hat + beta.data

    def backward(g):
        d_hat = g * gamma.data
        if training:
            m = g.shape[0]
            dx = inv_std / m * (m * d_hat - d_hat.sum(axis=0) - x_hat * (d_hat * x_hat).sum(axis=0))
        else:
            dx = d_hat * inv_std
        return dx, (g * x_hat).sum(axis=0), g.sum(axis=0)

    return result(data, (x, gamma, beta), backward, 'batch_norm')


def einsum(spec: str, a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Two-operand einsum without repeated indices inside one operand.

    Used for the batched attention scores and memory reads.
    """
    a, b = as_tensor(a), as_tensor(b)
    inputs, out = spec.split('->')
    a_spec, b_spec = inputs.split(',')
    try:
        data = np.einsum(spec, a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"einsum '{spec}': shapes {a.shape} and {b.shape} do not agree") from exc

    def backward(g):
        ga = np.einsum(f'{out},{b_spec}->{a_spec}', g, b.data)
        gb = np.einsum(f'{out},{a_spec}->{b_spec}', g, a.data)
        return ga, gb

    return result(data, (a, b), backward, 'einsum')
