"""Minimal reverse-mode autodiff over dense float64 arrays.

Define-by-run: each primitive records a closure that propagates the
output cotangent back to its inputs, and ``backward`` replays the tape
in reverse topological order.  The primitive set is exactly what the
pose score network needs; there is no broadcasting beyond what these
ops do internally.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError


class Value:
    """A node in the computation record: data, accumulated grad, parents."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None  # allocated lazily on first accumulation
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Value(shape={self.data.shape})"


def _as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def backward(loss: Value) -> None:
    """Backpropagate d(loss)/d(node) into every reachable node's grad.

    ``loss`` must be scalar.  The trace is consumed: a second backward
    through the same nodes raises.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo: list[Value] = []
    seen: set[int] = set()
    stack: list[tuple[Value, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            if node._backward is _CONSUMED:
                raise ContractError("backward called twice on the same trace")
            node._backward(node.grad)
            node._backward = _CONSUMED
            node._parents = ()


def _consumed_marker(_g):  # pragma: no cover - never invoked
    raise ContractError("trace already consumed")


_CONSUMED = _consumed_marker


def linear(x: Value, W: Value, b: Value | None = None) -> Value:
    """x @ W + b with x of shape (..., in), W (in, out), b (out,)."""
    x, W = _as_value(x), _as_value(W)
    if x.data.shape[-1] != W.data.shape[0]:
        raise ShapeError(
            f"linear: x has shape {x.data.shape}, W has shape {W.data.shape}"
        )
    out_data = x.data @ W.data
    if b is not None:
        b = _as_value(b)
        if b.data.shape != (W.data.shape[1],):
            raise ShapeError(
                f"linear: b has shape {b.data.shape}, W has shape {W.data.shape}"
            )
        out_data = out_data + b.data
    parents = (x, W) if b is None else (x, W, b)

    def bwd(g):
        x2 = x.data.reshape(-1, x.data.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        x.accumulate(g @ W.data.T)
        W.accumulate(x2.T @ g2)
        if b is not None:
            b.accumulate(g2.sum(axis=0))

    return Value(out_data, parents, bwd)


def relu(x: Value) -> Value:
    x = _as_value(x)
    mask = x.data > 0

    def bwd(g):
        x.accumulate(g * mask)

    return Value(np.where(mask, x.data, 0.0), (x,), bwd)


def sin(x: Value) -> Value:
    x = _as_value(x)

    def bwd(g):
        x.accumulate(g * np.cos(x.data))

    return Value(np.sin(x.data), (x,), bwd)


def cos(x: Value) -> Value:
    x = _as_value(x)

    def bwd(g):
        x.accumulate(-g * np.sin(x.data))

    return Value(np.cos(x.data), (x,), bwd)


def add(x: Value, y: Value) -> Value:
    """Elementwise sum; shapes must match exactly."""
    x, y = _as_value(x), _as_value(y)
    if x.data.shape != y.data.shape:
        raise ShapeError(f"add: shapes {x.data.shape} and {y.data.shape} differ")

    def bwd(g):
        x.accumulate(g)
        y.accumulate(g)

    return Value(x.data + y.data, (x, y), bwd)


def scale(x: Value, c) -> Value:
    """Multiply by a constant scalar or constant array broadcastable to x."""
    x = _as_value(x)
    c = np.asarray(c, dtype=np.float64)
    out = x.data * c
    if out.shape != x.data.shape:
        raise ShapeError(
            f"scale: constant of shape {c.shape} changes x shape {x.data.shape}"
        )

    def bwd(g):
        x.accumulate(g * c)

    return Value(out, (x,), bwd)


def concat(xs: list[Value], axis: int = -1) -> Value:
    xs = [_as_value(x) for x in xs]
    if not xs:
        raise ShapeError("concat: empty input list")
    sizes = [x.data.shape[axis] for x in xs]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for x, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            x.accumulate(g[tuple(idx)])

    return Value(np.concatenate([x.data for x in xs], axis=axis), tuple(xs), bwd)


def reshape(x: Value, shape) -> Value:
    x = _as_value(x)

    def bwd(g):
        x.accumulate(g.reshape(x.data.shape))

    return Value(x.data.reshape(shape), (x,), bwd)


def take(x: Value, indices: np.ndarray, axis: int) -> Value:
    """Gather along one axis with integer indices; backward scatter-adds."""
    x = _as_value(x)
    indices = np.asarray(indices)

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(np.moveaxis(gx, axis, 0), indices, np.moveaxis(g, axis, 0))
        x.accumulate(gx)

    return Value(np.take(x.data, indices, axis=axis), (x,), bwd)


def max_pool_points(x: Value, axis: int = -2) -> Value:
    """Max over one axis (the per-part point axis).

    The gradient routes to the first occurrence of the maximum only.
    The forward value is invariant to permutations along the pooled axis.
    """
    x = _as_value(x)
    if x.data.shape[axis] == 0:
        raise ShapeError(f"max_pool_points: empty axis {axis} in shape {x.data.shape}")
    arg = np.argmax(x.data, axis=axis)

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(
            gx, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis
        )
        x.accumulate(gx)

    return Value(np.max(x.data, axis=axis), (x,), bwd)


def mean_pool_nodes(x: Value, axis: int = -2) -> Value:
    """Mean over one axis, summed in per-coordinate sorted order.

    Sorting before summation makes the forward value exactly invariant
    to permutations along the pooled axis (float addition is not
    associative, a plain sum is order-dependent).  The gradient of a
    mean is uniform, so backward needs no sort.  An empty axis pools to
    zeros: an isolated graph node aggregates no messages.
    """
    x = _as_value(x)
    n = x.data.shape[axis]
    out_shape = tuple(s for i, s in enumerate(x.data.shape) if i != axis % x.data.ndim)
    if n == 0:
        out_data = np.zeros(out_shape)
    else:
        out_data = np.sort(x.data, axis=axis).sum(axis=axis) / n

    def bwd(g):
        if n == 0:
            x.accumulate(np.zeros_like(x.data))
            return
        x.accumulate(np.repeat(np.expand_dims(g / n, axis), n, axis=axis))

    return Value(out_data, (x,), bwd)


def square_norm(x: Value, axis=None) -> Value:
    """Sum of squared entries, over all axes or the given axis tuple."""
    x = _as_value(x)
    out = np.sum(x.data * x.data, axis=axis)

    def bwd(g):
        if axis is None:
            x.accumulate(2.0 * g * x.data)
        else:
            x.accumulate(2.0 * np.expand_dims(g, axis) * x.data)

    return Value(out, (x,), bwd)
