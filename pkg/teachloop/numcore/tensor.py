"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure propagating the upstream gradient to them. :func:`backward` walks the
graph in reverse topological order. Gradients accumulate additively into
``Tensor.grad`` until :func:`zero_grad` clears them.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from ..errors import ErrorCode, TeachLoopError

DTYPE = np.float64

_grad_mode = threading.local()


def grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block; results are constants. Scoped per thread."""

    previous = grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Tensor:
    """A node in the computation graph.

    ``data`` is a float64 ndarray; ``shape`` mirrors it. Leaf tensors created
    with ``requires_grad=True`` are parameters and receive gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ) -> None:
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise TeachLoopError(
                ErrorCode.CONTRACT_ERROR,
                f"item() needs a single-element tensor, got shape {self.shape}.",
            )
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=DTYPE, copy=True)
        else:
            self.grad += grad

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other) -> "Tensor":
        return add(as_tensor(other), neg(self))

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        return div(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __getitem__(self, index) -> "Tensor":
        return take(self, index)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""

    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    if not grad_enabled() or not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward_fn)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def _backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad, b.shape))

    return _make(out_data, (a, b), _backward)


def neg(a: Tensor) -> Tensor:
    def _backward(grad: np.ndarray) -> None:
        a._accumulate(-grad)

    return _make(-a.data, (a,), _backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def _backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad * a.data, b.shape))

    return _make(out_data, (a, b), _backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def _backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-grad * out_data / b.data, b.shape))

    return _make(out_data, (a, b), _backward)


def square(a: Tensor) -> Tensor:
    def _backward(grad: np.ndarray) -> None:
        a._accumulate(2.0 * grad * a.data)

    return _make(a.data * a.data, (a,), _backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def _backward(grad: np.ndarray) -> None:
        a._accumulate(grad * (1.0 - out_data * out_data))

    return _make(out_data, (a,), _backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0

    def _backward(grad: np.ndarray) -> None:
        a._accumulate(grad * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), _backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def _backward(grad: np.ndarray) -> None:
        a._accumulate(grad * out_data)

    return _make(out_data, (a,), _backward)


def log(a: Tensor) -> Tensor:
    def _backward(grad: np.ndarray) -> None:
        a._accumulate(grad / a.data)

    return _make(np.log(a.data), (a,), _backward)


def softplus(a: Tensor) -> Tensor:
    out_data = np.logaddexp(0.0, a.data)

    def _backward(grad: np.ndarray) -> None:
        # d/dx log(1 + e^x) = sigmoid(x), computed without overflow
        a._accumulate(grad * np.exp(a.data - out_data))

    return _make(out_data, (a,), _backward)


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp values; the gradient is zero where the clamp is active."""

    inside = (a.data >= low) & (a.data <= high)

    def _backward(grad: np.ndarray) -> None:
        a._accumulate(grad * inside)

    return _make(np.clip(a.data, low, high), (a,), _backward)


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    out_data = a.data.sum() if axis is None else a.data.sum(axis=axis)

    def _backward(grad: np.ndarray) -> None:
        if axis is None:
            a._accumulate(np.broadcast_to(grad, a.shape))
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(grad, axis), a.shape))

    return _make(np.asarray(out_data), (a,), _backward)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return sum_(a, axis=axis) * (1.0 / count)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; ties route the gradient to ``a``."""

    pick_a = a.data <= b.data

    def _backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad * pick_a, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad * ~pick_a, b.shape))

    return _make(np.where(pick_a, a.data, b.data), (a, b), _backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(grad: np.ndarray) -> None:
        for tensor, piece in zip(tensors, np.split(grad, splits, axis=axis)):
            if tensor.requires_grad:
                tensor._accumulate(piece)

    return _make(out_data, tuple(tensors), _backward)


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(part is Ellipsis or part is None or isinstance(part, (int, slice)) for part in parts)


def take(a: Tensor, index) -> Tensor:
    basic = _is_basic_index(index)

    def _backward(grad: np.ndarray) -> None:
        full = np.zeros_like(a.data)
        if basic:
            full[index] = grad
        else:
            np.add.at(full, index, grad)
        a._accumulate(full)

    return _make(np.array(a.data[index], dtype=DTYPE), (a,), _backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight.T + bias`` over the last axis of ``x``."""

    out_data = x.data @ weight.data.T + bias.data

    def _backward(grad: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(grad @ weight.data)
        if weight.requires_grad:
            g2 = grad.reshape(-1, grad.shape[-1])
            x2 = x.data.reshape(-1, x.data.shape[-1])
            weight._accumulate(g2.T @ x2)
        if bias.requires_grad:
            bias._accumulate(grad.reshape(-1, grad.shape[-1]).sum(axis=0))

    return _make(out_data, (x, weight, bias), _backward)


def pnorm(a: Tensor, p: int, axis: int = -1) -> Tensor:
    """L1 or L2 norm over ``axis``. The subgradient at the origin is zero."""

    if p == 1:
        out_data = np.abs(a.data).sum(axis=axis)

        def _backward(grad: np.ndarray) -> None:
            a._accumulate(np.expand_dims(grad, axis) * np.sign(a.data))

        return _make(out_data, (a,), _backward)

    if p == 2:
        out_data = np.sqrt((a.data * a.data).sum(axis=axis))

        def _backward(grad: np.ndarray) -> None:
            norm = np.expand_dims(out_data, axis)
            safe = np.where(norm > 0.0, norm, 1.0)
            a._accumulate(np.expand_dims(grad, axis) * np.where(norm > 0.0, a.data / safe, 0.0))

        return _make(out_data, (a,), _backward)

    raise TeachLoopError(ErrorCode.CONTRACT_ERROR, f"Unsupported norm order p={p}; expected 1 or 2.")


def log_one_minus_tanh_sq(u: Tensor) -> Tensor:
    """Stable ``log(1 - tanh(u)^2)`` as ``2 (log 2 - u - softplus(-2u))``."""

    return (math.log(2.0) - u - softplus(u * -2.0)) * 2.0


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Propagate d(loss)/d(node) into every reachable parameter's ``grad``."""

    if loss.data.size != 1:
        raise TeachLoopError(
            ErrorCode.CONTRACT_ERROR,
            f"backward() needs a scalar loss, got shape {loss.shape}.",
        )
    if not loss.requires_grad:
        return

    order = _topological_order(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            node._accumulate(grad)
            continue
        # Route parent gradients through a scratch slot so interior nodes never
        # keep a .grad of their own.
        parents = node._parents
        saved = [(p, p.grad) for p in parents if p._backward is not None]
        for parent, _ in saved:
            parent.grad = None
        node._backward(grad)
        for parent, previous in saved:
            contribution = parent.grad
            parent.grad = previous
            if contribution is None:
                continue
            if id(parent) in pending:
                pending[id(parent)] = pending[id(parent)] + contribution
            else:
                pending[id(parent)] = contribution


def zero_grad(params: Iterable[Tensor]) -> None:
    for param in params:
        param.grad = None


def all_finite(*arrays: np.ndarray) -> bool:
    return all(bool(np.all(np.isfinite(arr))) for arr in arrays)
