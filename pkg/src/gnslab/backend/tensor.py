"""Dense float64 tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record their parents together with a function mapping the upstream
gradient to the parent's gradient contribution; operations on constants record
nothing, so inference pays no bookkeeping cost.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import Any

import numpy as np

from .._errors import ContractError, ShapeError

GradFn = Callable[[np.ndarray], np.ndarray]


class Tensor:
    """A float64 array that optionally tracks gradients.

    Attributes:
        value: The underlying array (row-major, float64).
        requires_grad: Whether gradients flow into this tensor.
        grad: Gradient buffer with the shape of ``value``, filled by :func:`backward`.
        name: Optional parameter name, used in error messages and checkpoints.
    """

    __slots__ = ("value", "requires_grad", "grad", "name", "_parents")

    # ndarray <op> Tensor dispatches to the reflected Tensor operator.
    __array_ufunc__ = None

    def __init__(
        self,
        value: Any,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.value: np.ndarray = np.array(value, dtype=np.float64)
        self.requires_grad: bool = requires_grad
        self.grad: np.ndarray | None = None
        self.name: str | None = name
        self._parents: tuple[tuple[Tensor, GradFn], ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def detach(self) -> Tensor:
        """Return a constant copy that is cut off from the graph."""
        return Tensor(self.value.copy())

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.value.reshape(()))

    # Operator sugar
    def __add__(self, other: Any) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        return div(self, other)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __matmul__(self, other: Any) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, key: Any) -> Tensor:
        return getitem(self, key)


def as_tensor(x: Any) -> Tensor:
    """Wrap a value as a constant tensor unless it already is one."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value: np.ndarray, parents: Sequence[tuple[Tensor, GradFn]]) -> Tensor:
    tracked = tuple((p, fn) for p, fn in parents if p.requires_grad)
    out = Tensor(value, requires_grad=bool(tracked))
    out._parents = tracked
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.value + b.value,
        [
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(g, b.shape)),
        ],
    )


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.value - b.value,
        [
            (a, lambda g: _unbroadcast(g, a.shape)),
            (b, lambda g: _unbroadcast(-g, b.shape)),
        ],
    )


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.value * b.value,
        [
            (a, lambda g: _unbroadcast(g * b.value, a.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.shape)),
        ],
    )


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.value / b.value,
        [
            (a, lambda g: _unbroadcast(g / b.value, a.shape)),
            (b, lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.shape)),
        ],
    )


def matmul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return _result(
        a.value @ b.value,
        [
            (a, lambda g: g @ b.value.T),
            (b, lambda g: a.value.T @ g),
        ],
    )


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0.0
    return _result(np.where(mask, a.value, 0.0), [(a, lambda g: g * mask)])


def square(a: Tensor) -> Tensor:
    return _result(a.value * a.value, [(a, lambda g: 2.0 * g * a.value)])


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.value)

    def grad_fn(g: np.ndarray) -> np.ndarray:
        # Subgradient 0 at the origin keeps coincident points finite.
        safe = np.where(out > 0.0, out, 1.0)
        return np.where(out > 0.0, 0.5 * g / safe, 0.0)

    return _result(out, [(a, grad_fn)])


def clip(a: Tensor, low: float, high: float) -> Tensor:
    inside = (a.value > low) & (a.value < high)
    return _result(np.clip(a.value, low, high), [(a, lambda g: g * inside)])


def sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def grad_fn(g: np.ndarray) -> np.ndarray:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape).copy()

    return _result(a.value.sum(axis=axis, keepdims=keepdims), [(a, grad_fn)])


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return sum(a, axis=axis, keepdims=keepdims) / float(count)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _result(a.value.reshape(shape), [(a, lambda g: g.reshape(a.shape))])


def getitem(a: Tensor, key: Any) -> Tensor:
    def grad_fn(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a.value)
        np.add.at(out, key, g)
        return out

    return _result(a.value[key], [(a, grad_fn)])


def concat(tensors: Sequence[Any], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0, *sizes])

    def make_grad(i: int) -> GradFn:
        def grad_fn(g: np.ndarray) -> np.ndarray:
            index = [slice(None)] * g.ndim
            index[axis] = slice(int(bounds[i]), int(bounds[i + 1]))
            return g[tuple(index)]

        return grad_fn

    value = np.concatenate([p.value for p in parts], axis=axis)
    return _result(value, [(p, make_grad(i)) for i, p in enumerate(parts)])


def take(a: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of ``a`` (axis 0) by integer index."""
    idx = np.asarray(indices, dtype=np.int64)

    def grad_fn(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return _result(a.value[idx], [(a, grad_fn)])


def segment_sum(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets.

    Rows are added in index order, so the result is reproducible bit for bit.
    Empty segments are zero.
    """
    ids = np.asarray(segment_ids, dtype=np.int64)
    out = np.zeros((num_segments, *a.shape[1:]), dtype=np.float64)
    np.add.at(out, ids, a.value)
    return _result(out, [(a, lambda g: g[ids])])


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, wrt: Sequence[Tensor] = ()) -> list[np.ndarray]:
    """Back-propagate from a scalar loss.

    Gradient buffers are reset on every call: each leaf reached from ``loss``
    and every tensor in ``wrt`` ends up holding exactly d(loss)/d(leaf) for this
    call. Tensors in ``wrt`` that ``loss`` does not depend on get zero gradients.

    Args:
        loss: Scalar tensor produced by recorded operations.
        wrt: Parameters whose gradients should be returned.

    Returns:
        The gradient arrays of ``wrt``, in order.
    """
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    for p in wrt:
        p.grad = np.zeros_like(p.value)

    order = _topological_order(loss)
    for node in order:
        if node.requires_grad and not node._parents:
            node.grad = np.zeros_like(node.value)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            if node.requires_grad:
                node.grad = node.grad + g if node.grad is not None else g
            continue
        for parent, grad_fn in node._parents:
            contribution = grad_fn(g)
            key = id(parent)
            grads[key] = grads[key] + contribution if key in grads else contribution

    return [p.grad if p.grad is not None else np.zeros_like(p.value) for p in wrt]
