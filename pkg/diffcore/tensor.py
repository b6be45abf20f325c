"""
Tensors, parameters and the computation record used for reverse-mode
differentiation.

Every differentiable primitive produces a Tensor that remembers its parent
tensors and a closure mapping the output adjoint to one adjoint per parent.
``backward`` orders the reachable operations into a ComputationRecord and
replays the adjoints from the loss back to the parameters.
"""
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import DimensionError


ArrayLike = Union['Tensor', np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """Dense float64 array that participates in a recorded computation."""

    __slots__ = ('data', 'requires_grad', 'grad', 'op', '_parents', '_backward')

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Tuple['Tensor', ...] = (),
        backward: Optional[BackwardFn] = None,
        op: str = 'leaf'
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.op = op
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # Arithmetic
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis: Optional[int] = None) -> 'Tensor':
        return reduce_sum(self, axis)

    def mean(self, axis: Optional[int] = None) -> 'Tensor':
        count = self.size if axis is None else self.shape[axis]
        return mul(reduce_sum(self, axis), 1.0 / count)

    def reshape(self, *shape) -> 'Tensor':
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


class Parameter(Tensor):
    """A named trainable tensor with a gradient buffer of identical shape."""

    __slots__ = ('name',)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def as_tensor(value: ArrayLike) -> Tensor:
    """Wrap a constant as a non-differentiable tensor; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def result(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn, op: str) -> Tensor:
    """
    Build the output tensor of a primitive.

    The output is recorded only when at least one parent needs a gradient;
    otherwise it is a plain constant and no closure is kept alive.
    """
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents), backward=backward, op=op)
    return Tensor(data, op=op)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast adjoint back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return result(data, (a, b), backward, 'add')


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return result(data, (a, b), backward, 'mul')


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return result(-a.data, (a,), lambda g: (-g,), 'neg')


def take(a: Tensor, index) -> Tensor:
    """Basic slicing (no fancy indexing); the adjoint scatters back into zeros."""
    data = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] += g
        return (full,)

    return result(data, (a,), backward, 'take')


def reduce_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return result(data, (a,), backward, 'sum')


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)
    return result(data, (a,), lambda g: (g.reshape(a.shape),), 'reshape')


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = ', '.join(str(t.shape) for t in tensors)
        raise DimensionError(f"cannot concatenate shapes {shapes} on axis {axis}") from exc
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return result(data, tensors, backward, 'concat')


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = ', '.join(str(t.shape) for t in tensors)
        raise DimensionError(f"cannot stack shapes {shapes}") from exc

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return result(data, tensors, backward, 'stack')


class ComputationRecord:
    """
    Topologically ordered list of the operations reachable from an output.

    Every operation appears after all of its inputs, and each appears once.
    """

    def __init__(self, operations: List[Tensor]):
        self.operations = operations

    @classmethod
    def trace(cls, output: Tensor) -> 'ComputationRecord':
        order: List[Tensor] = []
        visited = set()
        stack_: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack_:
            node, expanded = stack_.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack_.append((node, True))
            for parent in reversed(node._parents):
                if parent.requires_grad and id(parent) not in visited:
                    stack_.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.operations)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.operations)

    def replay(self, output: Tensor, seed: np.ndarray) -> None:
        """Propagate adjoints in reverse order; leaves accumulate into ``grad``."""
        adjoints = {id(output): seed}
        for node in reversed(self.operations):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + parent_grad
                else:
                    adjoints[key] = parent_grad


def backward(loss: Tensor, record: Optional[ComputationRecord] = None) -> ComputationRecord:
    """
    Accumulate d(loss)/d(parameter) into every reachable Parameter.

    Args:
        loss: Scalar tensor produced from parameters
        record: Pre-traced record; traced from ``loss`` when omitted

    Returns:
        The ComputationRecord that was replayed

    Raises:
        DimensionError: If ``loss`` is not a scalar
    """
    if loss.size != 1:
        raise DimensionError(f"backward requires a scalar loss, got shape {loss.shape}")
    if record is None:
        record = ComputationRecord.trace(loss)
    if loss.requires_grad:
        record.replay(loss, np.ones_like(loss.data))
    return record
