"""Fusion heads joining the two branch summary vectors.

The factorized bilinear pool sums elementwise products of paired linear
projections; the concatenation head is the plain linear alternative used
by the fusion ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .attention import glorot
from .errors import ShapeMismatch
from .rng import Rng
from .tensor import Tensor


@dataclass
class MfbParams:
    """Paired factor projections, one (wf, wh) per factor."""

    wf: list[Tensor]
    wh: list[Tensor]

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for k, (f, h) in enumerate(zip(self.wf, self.wh)):
            out += [(f"{prefix}.f{k}", f), (f"{prefix}.h{k}", h)]
        return out


def init_mfb_params(d_in: int, d_mfb: int, factors: int, rng: Rng) -> MfbParams:
    if factors < 1:
        raise ValueError(f"factor count must be >= 1, got {factors}")
    return MfbParams(
        wf=[glorot(rng, d_mfb, d_in) for _ in range(factors)],
        wh=[glorot(rng, d_mfb, d_in) for _ in range(factors)],
    )


def mfb_pool(p: MfbParams, f_vec: Tensor, h_vec: Tensor) -> Tensor:
    """sum_k (wf_k f) * (wh_k h), elementwise product per factor."""
    if f_vec.ndim != 1 or h_vec.ndim != 1:
        raise ShapeMismatch("fusion inputs must be vectors")
    if f_vec.shape != h_vec.shape:
        raise ShapeMismatch(f"fusion inputs differ in width: {f_vec.shape} vs {h_vec.shape}")
    out: Tensor | None = None
    for wf_k, wh_k in zip(p.wf, p.wh):
        term = T.mul(T.matmul(wf_k, f_vec), T.matmul(wh_k, h_vec))
        out = term if out is None else T.add(out, term)
    return out


def concat_fusion(f_vec: Tensor, h_vec: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Linear map of the concatenated summary vectors."""
    if f_vec.ndim != 1 or h_vec.ndim != 1:
        raise ShapeMismatch("fusion inputs must be vectors")
    joined = T.concat([f_vec, h_vec], axis=0)
    if w.ndim != 2 or w.shape[1] != joined.shape[0]:
        raise ShapeMismatch(f"fusion weight {w.shape} does not accept width {joined.shape[0]}")
    return T.add(T.matmul(w, joined), b)
