"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable operation appends a node to the active :class:`Tape`
when at least one input requires a gradient. :func:`backward` walks the tape
in reverse, which is a valid topological order because nodes are appended in
execution order.

Tensors are thin wrappers around ``numpy`` arrays. Binary elementwise ops
require equal shapes, except that a 1-D right operand may be broadcast over
rows (bias addition).
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    pass


class NotScalar(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        raise TypeError("only division by a python scalar is supported")

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    @property
    def T(self):
        return transpose(self)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Operation log for one differentiation island.

    Use as a context manager to make it the active tape for the current
    thread; otherwise each thread records onto its own default tape.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        self.nodes.append(_Node(out, inputs, backward))

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _state().stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state().stack.pop()


class _ThreadState(threading.local):
    def __init__(self):
        self.stack: list[Tape] = [Tape()]
        self.grad_enabled = True


_local = _ThreadState()


def _state() -> _ThreadState:
    return _local


def active_tape() -> Tape:
    return _state().stack[-1]


@contextmanager
def no_grad():
    st = _state()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], backward: Callable) -> Tensor:
    st = _state()
    needs = st.grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        st.stack[-1].record(out, inputs, backward)
    return out


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Populate ``.grad`` on every tensor that fed ``loss`` and clear the tape.

    Leaf gradients accumulate across calls; reset them with :func:`zero_grad`.
    """
    if loss.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = active_tape() if tape is None else tape
    for node in tape.nodes:
        node.out.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        grads = node.backward(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            if inp.grad is None:
                inp.grad = gi
            else:
                inp.grad = inp.grad + gi
    tape.clear()


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


# ----------------------------------------------------------------------------
# elementwise


def _unbias(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.reshape(-1, shape[-1]).sum(axis=0).reshape(shape)


def _check_binary(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    if b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return
    raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} are incompatible")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_binary(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (g, _unbias(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_binary(a, b, "sub")
    sb = b.shape
    return _make(a.data - b.data, (a, b), lambda g: (g, -_unbias(g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_binary(a, b, "mul")
    ad, bd, sb = a.data, b.data, b.shape
    return _make(ad * bd, (a, b), lambda g: (g * bd, _unbias(g * ad, sb)))


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,))


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return _make(ad**p, (a,), lambda g: (g * p * ad ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


# ----------------------------------------------------------------------------
# linear algebra and shape


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; leading batch axes are allowed on either side."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    if bd.ndim > 2 and ad.ndim != bd.ndim:
        raise ShapeMismatch(f"matmul: batch ranks differ {a.shape} @ {b.shape}")

    if bd.ndim == 2 and ad.ndim > 2:
        # one GEMM over all leading rows
        a2 = ad.reshape(-1, ad.shape[-1])
        out = (a2 @ bd).reshape(ad.shape[:-1] + (bd.shape[1],))

        def bw(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ bd.T).reshape(ad.shape), a2.T @ g2

        return _make(out, (a, b), bw)

    def bw(g):
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _make(ad @ bd, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    return _make(np.swapaxes(a.data, ax1, ax2), (a,), lambda g: (np.swapaxes(g, ax1, ax2),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    datas = [p.data for p in parts]
    ax = axis % datas[0].ndim
    bounds = np.cumsum([d.shape[ax] for d in datas])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(np.concatenate(datas, axis=ax), tuple(parts), bw)


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(np.stack([p.data for p in parts], axis=axis), tuple(parts), bw)


def select(a: Tensor, index: int, axis: int = 0) -> Tensor:
    """Pick one slice along ``axis`` (drops the axis)."""
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        sl = [slice(None)] * len(shape)
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return _make(np.take(a.data, index, axis=axis), (a,), bw)


def repeat_rows(a: Tensor, n: int) -> Tensor:
    """Tile a ``(1, d)`` row into ``(n, d)``."""
    if a.data.ndim != 2 or a.shape[0] != 1:
        raise ShapeMismatch(f"repeat_rows expects (1, d), got {a.shape}")
    return _make(np.repeat(a.data, n, axis=0), (a,), lambda g: (g.sum(axis=0, keepdims=True),))


def embed(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    rows = table.shape[0]

    def bw(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        raise IndexError(f"embedding id out of range [0, {rows})")
    return _make(table.data[ids], (table,), bw)


def gather_rows(x: Tensor, idx) -> Tensor:
    """Per-batch row gather: ``x`` is (B, n, d), ``idx`` is (B, T) -> (B, T, d)."""
    idx = np.asarray(idx, dtype=np.int64)
    b = np.arange(x.shape[0])[:, None]

    def bw(g):
        gx = np.zeros(x.shape)
        np.add.at(gx, (np.broadcast_to(b, idx.shape), idx), g)
        return (gx,)

    return _make(x.data[b, idx], (x,), bw)


# ----------------------------------------------------------------------------
# reductions and normalisation


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _make(np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return _make(np.array(a.data.mean()), (a,), lambda g: (np.full(shape, float(g) / n),))


def mean_rows(a: Tensor) -> Tensor:
    """Mean over axis 0 of an (N, d) matrix, keeping a (1, d) row."""
    n = a.shape[0]
    return _make(a.data.mean(axis=0, keepdims=True), (a,), lambda g: (np.repeat(g / n, n, axis=0),))


def softmax_rows(x: Tensor, mask_logits: np.ndarray | None = None) -> Tensor:
    """Softmax along the last axis with max subtraction.

    ``mask_logits`` is an additive constant (e.g. ``-1e9`` at masked spots).
    """
    z = x.data if mask_logits is None else x.data + mask_logits
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (x,), bw)


def log_softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    sm = np.exp(out)
    return _make(out, (x,), lambda g: (g - sm * g.sum(axis=-1, keepdims=True),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then affine."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    d = xd.shape[-1]

    def bw(g):
        gx_hat = g * gd
        gx = inv / d * (d * gx_hat - gx_hat.sum(-1, keepdims=True) - xhat * (gx_hat * xhat).sum(-1, keepdims=True))
        ggain = (g * xhat).reshape(-1, d).sum(axis=0)
        gbias = g.reshape(-1, d).sum(axis=0)
        return gx, ggain, gbias

    return _make(xhat * gd + bias.data, (x, gain, bias), bw)


def batch_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5):
    """Normalise each feature over the batch axis (axis 0 of an (N, d) matrix).

    Returns the output tensor plus the batch mean and variance so callers can
    maintain running statistics.
    """
    xd = x.data
    n = xd.shape[0]
    mu = xd.mean(axis=0)
    xc = xd - mu
    var = (xc * xc).mean(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data

    def bw(g):
        gx_hat = g * gd
        gx = inv / n * (n * gx_hat - gx_hat.sum(0) - xhat * (gx_hat * xhat).sum(0))
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _make(xhat * gd + bias.data, (x, gain, bias), bw), mu, var


def affine_norm(x: Tensor, mean: np.ndarray, var: np.ndarray, gain: Tensor, bias: Tensor,
                eps: float = 1e-5) -> Tensor:
    """Batch-norm inference path using fixed (running) statistics."""
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    gd = gain.data
    return _make(xhat * gd + bias.data, (x, gain, bias),
                 lambda g: (g * gd * inv, (g * xhat).sum(axis=0), g.sum(axis=0)))
