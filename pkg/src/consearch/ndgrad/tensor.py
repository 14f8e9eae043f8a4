"""Minimal reverse-mode automatic differentiation over numpy arrays.

Each operation returns a new Tensor holding the forward value and a
closure that routes gradients to its parents. `backward` walks the graph
once in reverse topological order and then dismantles it, so a fresh
forward pass is required before the next backward call.

Every op validates that its output is finite; a NaN or Inf anywhere
raises immediately rather than poisoning a training run.

A graph is single-threaded: one model instance must not run forward or
backward from two threads at once. Distinct instances share nothing and
may train concurrently.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise FloatingPointError("non-finite values in tensor constructor")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._spent = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    if not np.isfinite(data).all():
        raise FloatingPointError(f"non-finite values produced by op {op!r}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._spent = False
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape of a broadcast input."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# Shared forward math, reused verbatim by non-graph fast paths so that the
# two code paths agree bit for bit.

def sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return _result(data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), backward, "mul")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    return _result(-a.data, (a,), backward, "neg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _result(data, (a, b), backward, "matmul")


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    return _result(data, tuple(parts), backward, "concat")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - data * data))

    return _result(data, (a,), backward, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    data = sigmoid_np(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * data * (1.0 - data))

    return _result(data, (a,), backward, "sigmoid")


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0.0))

    return _result(data, (a,), backward, "relu")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    data = log_softmax_np(a.data, axis=axis)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g - np.exp(data) * g.sum(axis=axis, keepdims=True))

    return _result(data, (a,), backward, "log_softmax")


def take_rows(a: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather, e.g. embedding lookup: out[i] = a[ids[i]]."""
    ids = np.asarray(ids, dtype=np.int64)
    data = a.data[ids]

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.add.at(buf, ids, g)
            a._accumulate(buf)

    return _result(data, (a,), backward, "take_rows")


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick one entry per row along the last axis: out[i] = a[i, index[i]]."""
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    data = a.data[rows, index]

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.add.at(buf, (rows, index), g)
            a._accumulate(buf)

    return _result(data, (a,), backward, "gather")


def one_hot(ids: np.ndarray, depth: int) -> Tensor:
    """Constant one-hot encoding; carries no gradient."""
    ids = np.asarray(ids, dtype=np.int64)
    data = np.zeros(ids.shape + (depth,), dtype=np.float64)
    np.put_along_axis(data, ids[..., None], 1.0, axis=-1)
    return Tensor(data)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    data = a.data.mean(axis=axis)
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.full(a.data.shape, float(g) / count))
            else:
                a._accumulate(np.expand_dims(g, axis) / count * np.ones_like(a.data))

    return _result(np.asarray(data), (a,), backward, "mean")


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.full(a.data.shape, float(g)))
            else:
                a._accumulate(np.expand_dims(g, axis) * np.ones_like(a.data))

    return _result(np.asarray(data), (a,), backward, "sum")


def square(a: Tensor) -> Tensor:
    data = a.data * a.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * 2.0 * a.data)

    return _result(data, (a,), backward, "square")


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Valid 1-D convolution: (B, L, Cin) * (K, Cin, Cout) + (Cout,) -> (B, L-K+1, Cout)."""
    batch, length, c_in = x.data.shape
    k, wc_in, c_out = w.data.shape
    if wc_in != c_in:
        raise ValueError(f"channel mismatch: input {c_in}, kernel {wc_in}")
    if k > length:
        raise ValueError(f"kernel width {k} exceeds input length {length}")
    l_out = length - k + 1
    data = np.tile(b.data, (batch, l_out, 1))
    for j in range(k):
        data += x.data[:, j : j + l_out, :] @ w.data[j]

    def backward(g):
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 1)))
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for j in range(k):
                gw[j] = np.einsum("blc,blo->co", x.data[:, j : j + l_out, :], g)
            w._accumulate(gw)
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for j in range(k):
                gx[:, j : j + l_out, :] += g @ w.data[j].T
            x._accumulate(gx)

    return _result(data, (x, w, b), backward, "conv1d")


def backward(loss: Tensor) -> None:
    """Populate gradients of `loss` w.r.t. every reachable requires_grad leaf.

    The graph is dismantled afterwards; calling backward twice on the same
    loss raises.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._spent:
        raise RuntimeError("backward already called on this graph; run a new forward pass")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if not node.requires_grad or node._parents:
            # interior node: free its gradient and edges
            if node is not loss:
                node.grad = None
        node._parents = ()
        node._backward = None
        node._spent = True
