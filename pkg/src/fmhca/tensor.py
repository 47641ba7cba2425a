"""Dense tensors with reverse-mode automatic differentiation.

Values are numpy arrays of rank 0..2.  Every differentiable operation
returns a fresh tensor that records a backward closure, so gradients
propagate from a scalar loss to every reachable leaf.  Outputs of
operations are marked read-only; leaves stay writable so optimizers can
update them in place between graph builds.

Precision is process-wide: float32 by default (training), float64 for
gradient checking.  Select it with :func:`set_precision` or the
``FMHCA_PRECISION`` environment variable (``f32``/``f64``).
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np

from .errors import AllMasked, DoubleBackward, ShapeMismatch
from .rng import Rng

_DTYPES = {"f32": np.float32, "f64": np.float64}
_precision = os.environ.get("FMHCA_PRECISION", "f32")
if _precision not in _DTYPES:
    raise ValueError(f"FMHCA_PRECISION must be 'f32' or 'f64', got {_precision!r}")


def set_precision(mode: str) -> None:
    """Switch the process-wide numeric mode ('f32' or 'f64')."""
    global _precision
    if mode not in _DTYPES:
        raise ValueError(f"precision must be 'f32' or 'f64', got {mode!r}")
    _precision = mode


def get_precision() -> str:
    return _precision


def get_dtype() -> type:
    return _DTYPES[_precision]


class Tensor:
    """A shaped numeric buffer with an optional gradient slot.

    Leaves are created directly (``Tensor(data, requires_grad=True,
    name="w")``); non-leaves come out of the operations below and carry
    the backward closure that routes gradients to their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_bw", "_done")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=get_dtype())
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._bw = None
        self._done = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # small conveniences used when composing blocks
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def _op(data: np.ndarray, parents: Iterable[Tensor], bw) -> Tensor:
    """Wrap an operation result; records only parents that need gradients."""
    req = tuple(p for p in parents if p.requires_grad)
    t = Tensor.__new__(Tensor)
    t.data = data
    t.data.flags.writeable = False
    t.grad = None
    t.requires_grad = bool(req)
    t.name = None
    t._parents = req
    t._bw = bw if req else None
    t._done = False
    return t


def backward(loss: Tensor) -> dict[str, Tensor]:
    """Propagate gradients from a scalar loss back through the graph.

    Accumulates into ``.grad`` of every reachable tensor that requires a
    gradient and returns the named ones as a ``name -> Tensor`` map.
    Calling this twice on the same loss raises ``DoubleBackward``.
    """
    if loss.size != 1:
        raise ShapeMismatch(f"loss must be scalar, got shape {loss.shape}")
    if loss._done:
        raise DoubleBackward("backward() already ran for this loss")
    loss._done = True

    grads: dict[str, Tensor] = {}
    if not loss.requires_grad:
        return grads

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss._accum(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._bw is not None:
            node._bw(node.grad)

    for node in topo:
        if node.name is not None and node.requires_grad:
            grads[node.name] = Tensor(node.grad if node.grad is not None else np.zeros_like(node.data))
    return grads


def _check_2d(t: Tensor, what: str) -> None:
    if t.ndim != 2:
        raise ShapeMismatch(f"{what} must be 2-D, got shape {t.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; also accepts a matrix times a vector."""
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul inner extents differ: {a.shape} x {b.shape}")
        out = a.data @ b.data

        def bw(g):
            if a.requires_grad:
                a._accum(g @ b.data.T)
            if b.requires_grad:
                b._accum(a.data.T @ g)

        return _op(out, (a, b), bw)
    if a.ndim == 2 and b.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul inner extents differ: {a.shape} x {b.shape}")
        out = a.data @ b.data

        def bw(g):
            if a.requires_grad:
                a._accum(np.outer(g, b.data))
            if b.requires_grad:
                b._accum(a.data.T @ g)

        return _op(out, (a, b), bw)
    raise ShapeMismatch(f"matmul supports 2-D x 2-D or 2-D x 1-D, got {a.shape} x {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1-D second operand broadcasts over rows."""
    if a.shape == b.shape:
        def bw(g):
            if a.requires_grad:
                a._accum(g)
            if b.requires_grad:
                b._accum(g)

        return _op(a.data + b.data, (a, b), bw)
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        def bw(g):
            if a.requires_grad:
                a._accum(g)
            if b.requires_grad:
                b._accum(g.sum(axis=0))

        return _op(a.data + b.data, (a, b), bw)
    raise ShapeMismatch(f"add shapes incompatible: {a.shape} + {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub shapes differ: {a.shape} - {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(-g)

    return _op(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul shapes differ: {a.shape} * {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accum(g * b.data)
        if b.requires_grad:
            b._accum(g * a.data)

    return _op(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bw(g):
        a._accum(g * c)

    return _op(a.data * np.asarray(c, dtype=a.data.dtype), (a,), bw)


def relu(a: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at exactly 0 is 0."""
    keep = a.data > 0

    def bw(g):
        a._accum(g * keep)

    return _op(np.where(keep, a.data, 0), (a,), bw)


def masked_softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise softmax with optional validity mask.

    Masked entries get probability exactly 0; valid entries follow the
    max-shifted softmax.  A row with no valid entry raises ``AllMasked``.
    """
    if x.ndim not in (1, 2):
        raise ShapeMismatch(f"masked_softmax expects rank 1 or 2, got {x.shape}")
    x2 = x.data if x.ndim == 2 else x.data[None, :]
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeMismatch(f"mask shape {mask.shape} != input shape {x.shape}")
        m2 = mask if x.ndim == 2 else mask[None, :]
        if not m2.any(axis=1).all():
            raise AllMasked("softmax row has no valid entry")
        logits = np.where(m2, x2, -np.inf)
    else:
        logits = x2
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    out = p if x.ndim == 2 else p[0]

    def bw(g):
        g2 = g if g.ndim == 2 else g[None, :]
        inner = (g2 * p).sum(axis=1, keepdims=True)
        dx = p * (g2 - inner)
        x._accum(dx if x.ndim == 2 else dx[0])

    return _op(out, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise normalization to zero mean / unit variance, then affine.

    Variance is the population variance (divide by the row length).
    """
    _check_2d(x, "layer_norm input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch(f"affine vectors must have shape ({c},), got {gamma.shape} and {beta.shape}")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        if gamma.requires_grad:
            gamma._accum((g * xhat).sum(axis=0))
        if beta.requires_grad:
            beta._accum(g.sum(axis=0))
        if x.requires_grad:
            dxhat = g * gamma.data
            dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
            x._accum(dx)

    return _op(out, (x, gamma, beta), bw)


def dropout(x: Tensor, rate: float, rng: Rng | None, training: bool) -> Tensor:
    """Inverted dropout: kept entries are scaled by 1/(1-rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an Rng")
    keep = rng.uniform(x.shape if x.ndim else (1,)) >= rate
    keep = keep.reshape(x.shape) if x.ndim else keep[0]
    factor = 1.0 / (1.0 - rate)
    scaled = (keep * factor).astype(x.data.dtype)

    def bw(g):
        x._accum(g * scaled)

    return _op(x.data * scaled, (x,), bw)


def concat(ts: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors of equal rank along ``axis``."""
    if not ts:
        raise ShapeMismatch("concat of zero tensors")
    nd = ts[0].ndim
    if any(t.ndim != nd for t in ts) or axis >= nd:
        raise ShapeMismatch(f"concat rank/axis mismatch: {[t.shape for t in ts]} axis={axis}")
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * nd
                idx[axis] = slice(lo, hi)
                t._accum(g[tuple(idx)])

    return _op(out, ts, bw)


def stack_rows(vs: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into a matrix, one per row."""
    if not vs:
        raise ShapeMismatch("stack_rows of zero tensors")
    n = vs[0].shape[0] if vs[0].ndim == 1 else -1
    if any(v.ndim != 1 or v.shape[0] != n for v in vs):
        raise ShapeMismatch(f"stack_rows needs equal-length vectors, got {[v.shape for v in vs]}")
    out = np.stack([v.data for v in vs], axis=0)

    def bw(g):
        for i, v in enumerate(vs):
            if v.requires_grad:
                v._accum(g[i])

    return _op(out, vs, bw)


def take_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice of a matrix."""
    _check_2d(x, "take_rows input")
    if not 0 <= start <= stop <= x.shape[0]:
        raise ShapeMismatch(f"row slice [{start}:{stop}] out of range for {x.shape}")
    out = x.data[start:stop].copy()

    def bw(g):
        dx = np.zeros_like(x.data)
        dx[start:stop] = g
        x._accum(dx)

    return _op(out, (x,), bw)


def row(x: Tensor, i: int) -> Tensor:
    """Single row of a matrix as a vector."""
    _check_2d(x, "row input")
    if not 0 <= i < x.shape[0]:
        raise ShapeMismatch(f"row {i} out of range for {x.shape}")
    out = x.data[i].copy()

    def bw(g):
        dx = np.zeros_like(x.data)
        dx[i] = g
        x._accum(dx)

    return _op(out, (x,), bw)


def mean_rows(x: Tensor) -> Tensor:
    """Mean over rows of a matrix, yielding one vector."""
    _check_2d(x, "mean_rows input")
    r = x.shape[0]
    if r == 0:
        raise ShapeMismatch("mean_rows of an empty matrix")
    out = x.data.mean(axis=0)

    def bw(g):
        x._accum(np.broadcast_to(g / r, x.shape).copy())

    return _op(out, (x,), bw)


def transpose(x: Tensor) -> Tensor:
    _check_2d(x, "transpose input")

    def bw(g):
        x._accum(g.T)

    return _op(x.data.T.copy(), (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeMismatch(f"cannot reshape {x.shape} to {shape}")

    def bw(g):
        x._accum(g.reshape(x.shape))

    return _op(x.data.reshape(shape).copy(), (x,), bw)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""

    def bw(g):
        x._accum(np.full_like(x.data, float(g)))

    return _op(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), bw)
