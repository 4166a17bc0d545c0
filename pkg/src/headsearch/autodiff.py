"""Reverse-mode automatic differentiation on float64 numpy arrays.

A ``Tensor`` wraps an ndarray and records the operations that produced it.
Calling :meth:`Tensor.backward` on a scalar result walks the graph in
reverse topological order and accumulates gradients into every tensor
reachable from it that has ``requires_grad`` set.

Everything is 64-bit and deterministic: same inputs and op order give
bitwise-identical values and gradients.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

LAYER_NORM_EPS = 1e-5

POOL_KINDS = ("max", "mean", "cls")

_grad_enabled = True


class ShapeError(ValueError):
    """Operands have incompatible shapes for an op."""


class EmptySequenceError(ValueError):
    """A sequence op received zero time steps."""


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._bw = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient "
                                 "needs a scalar tensor")
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=np.float64)

        # Iterative post-order topological sort; graphs can be deep.
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        for node in reversed(topo):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)

    # Operator sugar; the module-level functions are the primary API.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _make(data, parents, bw) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bw = bw
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / linear algebra


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    data = a.data + b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")
    data = a.data * b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), bw)


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)

    def bw(g):
        _accumulate(x, g * c)

    return _make(x.data * c, (x,), bw)


def matmul(a, b) -> Tensor:
    """a @ b with numpy batch semantics; either side may carry batch dims."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    data = a.data @ b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(data, (a, b), bw)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def bw(g):
        _accumulate(x, g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), bw)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    orig = x.shape

    def bw(g):
        _accumulate(x, g.reshape(orig))

    return _make(x.data.reshape(shape), (x,), bw)


def transpose(x, axes) -> Tensor:
    x = _as_tensor(x)
    inv = np.argsort(axes)

    def bw(g):
        _accumulate(x, g.transpose(inv))

    return _make(x.data.transpose(axes), (x,), bw)


# ---------------------------------------------------------------------------
# normalization / losses


def layer_norm(x, gain, bias, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} "
                         f"do not match last axis of {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def bw(g):
        dxhat = g * gain.data
        mean1 = dxhat.mean(axis=-1, keepdims=True)
        mean2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accumulate(x, inv * (dxhat - mean1 - xhat * mean2))
        axes = tuple(range(g.ndim - 1))
        _accumulate(gain, (g * xhat).sum(axis=axes))
        _accumulate(bias, g.sum(axis=axes))

    return _make(data, (x, gain, bias), bw)


def softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        _accumulate(x, p * (g - dot))

    return _make(p, (x,), bw)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy between softmax(logits) and integer labels.

    ``logits`` is [..., C]; ``labels`` holds class indices with shape equal
    to the leading dims of ``logits`` (a bare int for a 1-D logit vector).
    """
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"softmax_cross_entropy: labels {labels.shape} do not "
                         f"match logits {logits.shape}")
    c = logits.shape[-1]
    flat = logits.data.reshape(-1, c)
    idx = labels.reshape(-1)
    n = flat.shape[0]
    m = flat.max(axis=1, keepdims=True)
    z = flat - m
    lse = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(n), idx]
    data = np.float64((lse - picked).mean())

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(n), idx] -= 1.0
        _accumulate(logits, (p * (float(g) / n)).reshape(logits.shape))

    return _make(data, (logits,), bw)


# ---------------------------------------------------------------------------
# sequence ops


def conv1d_same(x, kernels, bias=None) -> Tensor:
    """1-D convolution over the time axis with zero padding.

    ``x`` is [T, Cin] or [B, T, Cin]; ``kernels`` is [Cout, Cin, k] with k
    odd. Output keeps the input sequence length; positions outside the
    sequence read as zero.
    """
    x, kernels = _as_tensor(x), _as_tensor(kernels)
    if kernels.ndim != 3:
        raise ShapeError(f"conv1d_same: kernels must be [Cout, Cin, k], got {kernels.shape}")
    k = kernels.shape[-1]
    if k % 2 == 0:
        raise ValueError(f"conv1d_same: kernel width must be odd, got {k}")
    squeeze = x.ndim == 2
    xb = x.data[None] if squeeze else x.data
    if xb.ndim != 3 or xb.shape[-1] != kernels.shape[1]:
        raise ShapeError(f"conv1d_same: input {x.shape} does not match kernels {kernels.shape}")
    b, t, cin = xb.shape
    cout = kernels.shape[0]
    half = k // 2
    xp = np.pad(xb, ((0, 0), (half, half), (0, 0)))
    data = np.zeros((b, t, cout))
    for j in range(k):
        data += xp[:, j:j + t, :] @ kernels.data[:, :, j].T
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv1d_same: bias {bias.shape} does not match Cout={cout}")
        data += bias.data

    parents = (x, kernels) if bias is None else (x, kernels, bias)

    def bw(g):
        gb = g[None] if squeeze else g
        dxp = np.zeros_like(xp)
        dk = np.zeros_like(kernels.data)
        for j in range(k):
            dxp[:, j:j + t, :] += gb @ kernels.data[:, :, j]
            dk[:, :, j] = np.einsum("bto,bti->oi", gb, xp[:, j:j + t, :])
        dx = dxp[:, half:half + t, :]
        _accumulate(x, dx[0] if squeeze else dx)
        _accumulate(kernels, dk)
        if bias is not None:
            _accumulate(bias, gb.sum(axis=(0, 1)))

    out_data = data[0] if squeeze else data
    return _make(out_data, parents, bw)


def pool(x, kind: str, lengths=None) -> Tensor:
    """Reduce [T, D] (or [B, T, D]) to [D] (or [B, D]).

    ``mean``/``max`` reduce over time; ``cls`` takes row 0. When ``lengths``
    is given, only the first ``lengths[b]`` rows of each sample take part in
    mean/max. Max ties route the gradient to the lowest index.
    """
    x = _as_tensor(x)
    if kind not in POOL_KINDS:
        raise ValueError(f"pool: unknown kind {kind!r}")
    squeeze = x.ndim == 2
    xb = x.data[None] if squeeze else x.data
    if xb.ndim != 3:
        raise ShapeError(f"pool: expected [T, D] or [B, T, D], got {x.shape}")
    b, t, d = xb.shape
    if t == 0:
        raise EmptySequenceError("pool: empty sequence (T=0)")
    if lengths is None:
        lens = np.full(b, t, dtype=np.int64)
    else:
        lens = np.atleast_1d(np.asarray(lengths, dtype=np.int64))
        if lens.shape != (b,):
            raise ShapeError(f"pool: lengths {lens.shape} do not match batch {b}")
        if (lens < 1).any() or (lens > t).any():
            raise ValueError("pool: lengths must lie in [1, T]")
    valid = np.arange(t)[None, :] < lens[:, None]  # [B, T]

    if kind == "cls":
        data = xb[:, 0, :]

        def bw(g):
            gb = g[None] if squeeze else g
            dx = np.zeros_like(xb)
            dx[:, 0, :] = gb
            _accumulate(x, dx[0] if squeeze else dx)

    elif kind == "mean":
        data = (xb * valid[:, :, None]).sum(axis=1) / lens[:, None]

        def bw(g):
            gb = g[None] if squeeze else g
            dx = (gb[:, None, :] / lens[:, None, None]) * valid[:, :, None]
            _accumulate(x, dx[0] if squeeze else dx)

    else:  # max
        masked = np.where(valid[:, :, None], xb, -np.inf)
        arg = masked.argmax(axis=1)  # [B, D], first max wins
        data = np.take_along_axis(xb, arg[:, None, :], axis=1)[:, 0, :]

        def bw(g):
            gb = g[None] if squeeze else g
            dx = np.zeros_like(xb)
            bi = np.repeat(np.arange(b), d)
            di = np.tile(np.arange(d), b)
            np.add.at(dx, (bi, arg.reshape(-1), di), gb.reshape(-1))
            _accumulate(x, dx[0] if squeeze else dx)

    return _make(data[0] if squeeze else data, (x,), bw)


def gather_rows(table, ids) -> Tensor:
    """Look up rows of [V, E] ``table`` by an integer id array."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"gather_rows: table must be 2-D, got {table.shape}")
    data = table.data[ids]

    def bw(g):
        if table.requires_grad:
            dt = np.zeros_like(table.data)
            np.add.at(dt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
            _accumulate(table, dt)

    return _make(data, (table,), bw)


def take_positions(x, batch_idx, pos_idx) -> Tensor:
    """Select rows (b, t) from [B, T, E], returning [M, E]."""
    x = _as_tensor(x)
    bi = np.asarray(batch_idx, dtype=np.int64)
    ti = np.asarray(pos_idx, dtype=np.int64)
    if x.ndim != 3:
        raise ShapeError(f"take_positions: expected [B, T, E], got {x.shape}")
    data = x.data[bi, ti]

    def bw(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, (bi, ti), g)
        _accumulate(x, dx)

    return _make(data, (x,), bw)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
