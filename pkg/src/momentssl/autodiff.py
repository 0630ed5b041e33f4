"""Reverse-mode automatic differentiation over dense float64 arrays.

Every op computes its forward value eagerly and registers a closure that
routes the upstream gradient to its parents. Graphs are built fresh per
step; parameters are long-lived leaf nodes whose ``grad`` buffers are
cleared between steps.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for shape mismatches at graph-construction time."""


class UsageError(RuntimeError):
    """Raised for API misuse (non-scalar backward root, repeated backward)."""


class NumericsError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


def _check_finite(value: np.ndarray) -> None:
    # sum() is NaN or +-Inf whenever any element is; one cheap reduction
    # instead of a full isfinite pass.
    if value.size and not np.isfinite(value.sum()):
        raise NumericsError("non-finite value produced by op")


class Node:
    """A value in the differentiation graph.

    Attributes:
        value: float64 ndarray (leaf values are copied in, never aliased).
        grad: accumulated gradient, same shape as value; None until backward.
        requires_grad: whether gradients flow to/through this node.
    """

    __slots__ = ("value", "grad", "parents", "_backward_fn", "requires_grad",
                 "_backward_done")

    def __init__(self, value, parents=(), backward_fn=None,
                 requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents: tuple[Node, ...] = tuple(parents)
        self._backward_fn = backward_fn
        self.requires_grad = requires_grad or any(
            p.requires_grad for p in self.parents)
        self._backward_done = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise UsageError("item() on non-scalar node")
        return float(self.value.reshape(()))

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:  # pragma: no cover
        return f"Node(shape={self.value.shape}, requires_grad={self.requires_grad})"


def variable(value) -> Node:
    """Leaf node that participates in gradients (a trainable parameter)."""
    node = Node(np.array(value, dtype=np.float64, copy=True),
                requires_grad=True)
    _check_finite(node.value)
    return node


def constant(value) -> Node:
    """Leaf node excluded from differentiation."""
    return Node(np.asarray(value, dtype=np.float64))


def as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _make(value: np.ndarray, parents: Sequence[Node], backward_fn) -> Node:
    _check_finite(value)
    if any(p.requires_grad for p in parents):
        return Node(value, parents, backward_fn)
    return Node(value)


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    out = a.value + b.value

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.value.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.value.shape))

    return _make(out, (a, b), backward)


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    out = a.value - b.value

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.value.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.value.shape))

    return _make(out, (a, b), backward)


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    out = a.value * b.value

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.value, b.value.shape))

    return _make(out, (a, b), backward)


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    out = a.value / b.value

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.value, a.value.shape))
        if b.requires_grad:
            b.accumulate_grad(
                _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

    return _make(out, (a, b), backward)


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise GraphError("matmul requires 2-D operands")
    if a.value.shape[1] != b.value.shape[0]:
        raise GraphError(
            f"matmul shape mismatch: {a.value.shape} @ {b.value.shape}")
    out = a.value @ b.value

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.value.T)
        if b.requires_grad:
            b.accumulate_grad(a.value.T @ g)

    return _make(out, (a, b), backward)


def relu(a) -> Node:
    a = as_node(a)
    out = np.maximum(a.value, 0.0)

    def backward(g):
        # subgradient at 0 is 0
        a.accumulate_grad(g * (a.value > 0.0))

    return _make(out, (a,), backward)


def square(a) -> Node:
    a = as_node(a)
    out = a.value * a.value

    def backward(g):
        a.accumulate_grad(g * (2.0 * a.value))

    return _make(out, (a,), backward)


def sqrt(a) -> Node:
    a = as_node(a)
    out = np.sqrt(a.value)

    def backward(g):
        a.accumulate_grad(g * (0.5 / out))

    return _make(out, (a,), backward)


def sum_all(a) -> Node:
    a = as_node(a)
    out = np.asarray(a.value.sum())

    def backward(g):
        a.accumulate_grad(np.broadcast_to(g, a.value.shape))

    return _make(out, (a,), backward)


def sum_over_axis(a, axis: int) -> Node:
    a = as_node(a)
    out = a.value.sum(axis=axis)

    def backward(g):
        a.accumulate_grad(
            np.broadcast_to(np.expand_dims(g, axis), a.value.shape))

    return _make(out, (a,), backward)


def mean_over_axis(a, axis: int) -> Node:
    a = as_node(a)
    n = a.value.shape[axis]
    out = a.value.mean(axis=axis)

    def backward(g):
        a.accumulate_grad(
            np.broadcast_to(np.expand_dims(g / n, axis), a.value.shape))

    return _make(out, (a,), backward)


def mean_all(a) -> Node:
    a = as_node(a)
    out = np.asarray(a.value.mean())

    def backward(g):
        a.accumulate_grad(np.broadcast_to(g / a.value.size, a.value.shape))

    return _make(out, (a,), backward)


def max_over_axis(a, axis: int) -> Node:
    a = as_node(a)
    out = a.value.max(axis=axis)
    # argmax takes the first maximum in index order; ties route there only.
    idx = np.expand_dims(a.value.argmax(axis=axis), axis)

    def backward(g):
        buf = np.zeros_like(a.value)
        np.put_along_axis(buf, idx, np.expand_dims(g, axis), axis=axis)
        a.accumulate_grad(buf)

    return _make(out, (a,), backward)


def broadcast_to(a, shape: tuple[int, ...]) -> Node:
    a = as_node(a)
    try:
        out = np.broadcast_to(a.value, shape).copy()
    except ValueError as exc:
        raise GraphError(str(exc)) from exc

    def backward(g):
        a.accumulate_grad(_unbroadcast(g, a.value.shape))

    return _make(out, (a,), backward)


def reshape(a, shape: tuple[int, ...]) -> Node:
    a = as_node(a)
    try:
        out = a.value.reshape(shape)
    except ValueError as exc:
        raise GraphError(str(exc)) from exc

    def backward(g):
        a.accumulate_grad(g.reshape(a.value.shape))

    return _make(out, (a,), backward)


def custom_op(value: np.ndarray, parents: Sequence[Node], backward_fn) -> Node:
    """Create a node with a hand-written backward rule.

    ``backward_fn(g)`` must accumulate into each parent with
    ``parent.accumulate_grad(...)`` itself.
    """
    return _make(np.asarray(value, dtype=np.float64), tuple(parents), backward_fn)


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate gradients of a scalar loss into every reachable leaf.

    Gradients sum across shared subexpressions. Re-running backward on the
    same root without rebuilding the graph is an error.
    """
    if loss.value.size != 1:
        raise UsageError("backward root must be scalar")
    if loss._backward_done:
        raise UsageError("backward already called on this root; rebuild the graph")
    loss._backward_done = True
    if not loss.requires_grad:
        return
    loss.grad = np.ones_like(loss.value)
    for node in reversed(_topo_order(loss)):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


def zero_grads(params: Iterable[Node]) -> None:
    for p in params:
        p.grad = None
