"""Scaled dot-product attention, multi-head cross-attention, and the
two-stage exchange between the trending and timely opinion sequences.

Stage 1 lets the trending sequence query the timely sequence; stage 2
sends the attended result back over the trending sequence.  Key-validity
masks keep padded rows at exactly zero attention probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeMismatch
from .rng import Rng
from .tensor import Tensor


@dataclass(frozen=True)
class AttentionConfig:
    """Width and head-count contract for one attention block."""

    d_model: int = 128
    heads: int = 8

    def __post_init__(self):
        if self.d_model <= 0 or self.heads <= 0:
            raise ValueError(f"d_model and heads must be positive, got {self.d_model}, {self.heads}")
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by heads={self.heads}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads


@dataclass
class AttentionOutput:
    """Attended context rows plus the weight matrix used to build them.

    For multi-head blocks ``weights`` is the mean over heads, detached
    from the graph; it exists for inspection, not for training.
    """

    context: Tensor
    weights: Tensor


@dataclass
class MhcaParams:
    """Per-head query/key/value projections and the output projection."""

    wq: list[Tensor]
    wk: list[Tensor]
    wv: list[Tensor]
    wo: Tensor

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for j, (q, k, v) in enumerate(zip(self.wq, self.wk, self.wv)):
            out += [(f"{prefix}.head{j}.wq", q), (f"{prefix}.head{j}.wk", k), (f"{prefix}.head{j}.wv", v)]
        out.append((f"{prefix}.wo", self.wo))
        return out


def glorot(rng: Rng, rows: int, cols: int) -> Tensor:
    """Glorot-uniform matrix leaf."""
    limit = math.sqrt(6.0 / (rows + cols))
    return Tensor((rng.uniform((rows, cols)) * 2.0 - 1.0) * limit, requires_grad=True)


def init_mhca_params(cfg: AttentionConfig, rng: Rng) -> MhcaParams:
    d, dk = cfg.d_model, cfg.d_k
    return MhcaParams(
        wq=[glorot(rng, d, dk) for _ in range(cfg.heads)],
        wk=[glorot(rng, d, dk) for _ in range(cfg.heads)],
        wv=[glorot(rng, d, dk) for _ in range(cfg.heads)],
        wo=glorot(rng, cfg.heads * dk, d),
    )


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    key_mask: np.ndarray | None = None,
) -> AttentionOutput:
    """softmax(q kᵀ / sqrt(d_k)) v with optional key-validity mask."""
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeMismatch("attention operands must be 2-D")
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatch(f"query/key widths differ: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ShapeMismatch(f"key/value lengths differ: {k.shape} vs {v.shape}")
    logits = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(q.shape[1]))
    mask2d = None
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        if key_mask.shape != (k.shape[0],):
            raise ShapeMismatch(f"key mask shape {key_mask.shape} != ({k.shape[0]},)")
        mask2d = np.broadcast_to(key_mask, logits.shape).copy()
    weights = T.masked_softmax(logits, mask2d)
    context = T.matmul(weights, v)
    return AttentionOutput(context=context, weights=weights)


def multi_head_cross_attention(
    p: MhcaParams,
    cfg: AttentionConfig,
    q_in: Tensor,
    kv_in: Tensor,
    key_mask: np.ndarray | None = None,
    training: bool = False,
    dropout_rate: float = 0.0,
    rng: Rng | None = None,
) -> AttentionOutput:
    """Project per head, attend, concatenate, and project back to d_model.

    The key and value sequences are the same input.  Returned weights are
    the per-head mean (detached), one row per query.
    """
    if q_in.ndim != 2 or q_in.shape[1] != cfg.d_model:
        raise ShapeMismatch(f"query input must be (*, {cfg.d_model}), got {q_in.shape}")
    if kv_in.ndim != 2 or kv_in.shape[1] != cfg.d_model:
        raise ShapeMismatch(f"key/value input must be (*, {cfg.d_model}), got {kv_in.shape}")
    heads = []
    weight_sum: np.ndarray | None = None
    for j in range(cfg.heads):
        out = scaled_dot_attention(
            T.matmul(q_in, p.wq[j]),
            T.matmul(kv_in, p.wk[j]),
            T.matmul(kv_in, p.wv[j]),
            key_mask,
        )
        heads.append(out.context)
        weight_sum = out.weights.data if weight_sum is None else weight_sum + out.weights.data
    context = T.matmul(T.concat(heads, axis=1), p.wo)
    if training and dropout_rate > 0.0:
        context = T.dropout(context, dropout_rate, rng, training=True)
    return AttentionOutput(context=context, weights=Tensor(weight_sum / cfg.heads))


def fmhca_two_stage(
    p1: MhcaParams,
    p2: MhcaParams,
    cfg: AttentionConfig,
    h_seq: Tensor,
    f_seq: Tensor,
    f_mask: np.ndarray | None = None,
    h_mask: np.ndarray | None = None,
    training: bool = False,
    dropout_rate: float = 0.0,
    rng: Rng | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """Two-stage cross-modal exchange.

    Stage 1: trending rows query the timely sequence (keys masked by
    ``f_mask``), producing the attended matrix G.  Stage 2: G queries
    the trending sequence (keys masked by ``h_mask``).  Returns the
    refined representation (one row per trending position) and the two
    stage weight matrices s1, s2.
    """
    stage1 = multi_head_cross_attention(
        p1, cfg, h_seq, f_seq, f_mask, training=training, dropout_rate=dropout_rate, rng=rng
    )
    stage2 = multi_head_cross_attention(
        p2, cfg, stage1.context, h_seq, h_mask, training=training, dropout_rate=dropout_rate, rng=rng
    )
    return stage2.context, stage1.weights, stage2.weights
