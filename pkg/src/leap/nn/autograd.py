"""Reverse-mode autodiff over float64 numpy arrays.

Ops build a graph of :class:`Tensor` nodes; :func:`backward` walks it once
in reverse topological order, accumulating gradients only into nodes that
require them. The op set is exactly what the models here use: dense
algebra, row gather/segment-sum for embedding tables, row softmax, 1-D
convolution, and inverted dropout.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    grad_parents = tuple(p for p in parents if p.requires_grad)
    if grad_parents:
        out.requires_grad = True
        out._parents = grad_parents
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(root: Tensor) -> None:
    """Accumulate droot/dleaf into .grad of every grad-requiring ancestor."""
    if root.data.size != 1:
        raise ValueError("backward expects a scalar root")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def back(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _result(a.data + b.data, (a, b), back)


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):

        def back(g):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

        return _result(a.data * b.data, (a, b), back)

    const = np.asarray(b, dtype=np.float64)

    def back_const(g):
        _accum(a, _unbroadcast(g * const, a.data.shape))

    return _result(a.data * const, (a,), back_const)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")

    def back(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")

    def back(g):
        _accum(a, g.T)

    return _result(a.data.T, (a,), back)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    orig = a.data.shape

    def back(g):
        _accum(a, g.reshape(orig))

    return _result(a.data.reshape(shape), (a,), back)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def back(g):
        _accum(a, g * mask)

    return _result(a.data * mask, (a,), back)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def back(g):
        _accum(a, g * (1.0 - out * out))

    return _result(out, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def back(g):
        _accum(a, g * out * (1.0 - out))

    return _result(out, (a,), back)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def back(g):
        _accum(a, g * out)

    return _result(out, (a,), back)


def log(a: Tensor) -> Tensor:
    def back(g):
        _accum(a, g / a.data)

    return _result(np.log(a.data), (a,), back)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through inside [lo, hi] and is zero outside."""
    inside = (a.data >= lo) & (a.data <= hi)

    def back(g):
        _accum(a, g * inside)

    return _result(np.clip(a.data, lo, hi), (a,), back)


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.data.shape

    def back(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, shape).copy())
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), shape).copy())

    return _result(a.data.sum(axis=axis), (a,), back)


def tmean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis), 1.0 / n)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-stable softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        _accum(a, out * (g - (g * out).sum(axis=-1, keepdims=True)))

    return _result(out, (a,), back)


def log_softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse

    def back(g):
        _accum(a, g - np.exp(out) * g.sum(axis=-1, keepdims=True))

    return _result(out, (a,), back)


def gather_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """out[i] = a[index[i]]; gradient scatter-adds back into the table."""
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, index, g)
        _accum(a, ga)

    return _result(a.data[index], (a,), back)


def seg_sum(values: Tensor, index: np.ndarray, num_segments: int) -> Tensor:
    """out[k] = sum of value rows whose index equals k."""
    index = np.asarray(index, dtype=np.intp)
    out = np.zeros((num_segments,) + values.data.shape[1:], dtype=np.float64)
    np.add.at(out, index, values.data)

    def back(g):
        _accum(values, g[index])

    return _result(out, (values,), back)


def pick(a: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """out[i] = a[rows[i], cols[i]]."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)

    def back(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (rows, cols), g)
        _accum(a, ga)

    return _result(a.data[rows, cols], (a,), back)


def conv1d_same(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """1-D convolution with same padding: (n, c, L) * (o, c, k) -> (n, o, L).

    Kernel width must be odd so the padding is symmetric.
    """
    n, c, length = x.data.shape
    o, c_w, k = w.data.shape
    if c != c_w:
        raise ValueError(f"channel mismatch: input {c}, kernels {c_w}")
    if k % 2 == 0:
        raise ValueError(f"kernel width must be odd, got {k}")
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    out = np.zeros((n, o, length), dtype=np.float64)
    for ki in range(k):
        out += np.einsum("ncl,oc->nol", xp[:, :, ki : ki + length], w.data[:, :, ki])
    out += b.data[None, :, None]

    def back(g):
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for ki in range(k):
                gxp[:, :, ki : ki + length] += np.einsum("nol,oc->ncl", g, w.data[:, :, ki])
            _accum(x, gxp[:, :, pad : pad + length])
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            for ki in range(k):
                gw[:, :, ki] = np.einsum("nol,ncl->oc", g, xp[:, :, ki : ki + length])
            _accum(w, gw)
        _accum(b, g.sum(axis=(0, 2)))

    return _result(out, (x, w, b), back)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: identity when rate is 0 or not training."""
    if not train or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("training-mode dropout needs a generator")
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)

    def back(g):
        _accum(x, g * mask)

    return _result(x.data * mask, (x,), back)
