"""Sequence preparation and the per-branch transformer layer.

Each opinion sequence gets a learned summary token prepended at row 0
and fixed sinusoidal position information added, then runs through
post-norm transformer layers (self-attention, then a position-wise
feed-forward block, each wrapped in residual + layer norm).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, MhcaParams, glorot, init_mhca_params, multi_head_cross_attention
from .errors import ShapeMismatch
from .rng import Rng
from .tensor import Tensor


@dataclass
class TransformerLayerParams:
    attn: MhcaParams
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = self.attn.named(f"{prefix}.attn")
        out += [
            (f"{prefix}.ffn.w1", self.w1),
            (f"{prefix}.ffn.b1", self.b1),
            (f"{prefix}.ffn.w2", self.w2),
            (f"{prefix}.ffn.b2", self.b2),
            (f"{prefix}.ln1.gamma", self.ln1_gamma),
            (f"{prefix}.ln1.beta", self.ln1_beta),
            (f"{prefix}.ln2.gamma", self.ln2_gamma),
            (f"{prefix}.ln2.beta", self.ln2_beta),
        ]
        return out


def init_transformer_params(cfg: AttentionConfig, d_ff: int, rng: Rng) -> TransformerLayerParams:
    if d_ff < cfg.d_model:
        raise ValueError(f"d_ff={d_ff} must be >= d_model={cfg.d_model}")
    d = cfg.d_model
    return TransformerLayerParams(
        attn=init_mhca_params(cfg, rng),
        w1=glorot(rng, d, d_ff),
        b1=Tensor(np.zeros(d_ff), requires_grad=True),
        w2=glorot(rng, d_ff, d),
        b2=Tensor(np.zeros(d), requires_grad=True),
        ln1_gamma=Tensor(np.ones(d), requires_grad=True),
        ln1_beta=Tensor(np.zeros(d), requires_grad=True),
        ln2_gamma=Tensor(np.ones(d), requires_grad=True),
        ln2_beta=Tensor(np.zeros(d), requires_grad=True),
    )


def prepend_cls(x: Tensor, cls: Tensor) -> Tensor:
    """Put the summary token at row 0, keeping the original row order."""
    if cls.ndim != 1:
        raise ShapeMismatch(f"cls token must be a vector, got {cls.shape}")
    if x.ndim != 2 or x.shape[1] != cls.shape[0]:
        raise ShapeMismatch(f"sequence width {x.shape} does not match cls width {cls.shape}")
    return T.concat([T.reshape(cls, (1, cls.shape[0])), x], axis=0)


def positional_encoding(length: int, d: int) -> Tensor:
    """Fixed sinusoidal position table: sin on even columns, cos on odd."""
    pe = np.zeros((length, d))
    pos = np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(0, d, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, idx / d)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)[:, : pe[:, 1::2].shape[1]]
    return Tensor(pe)


def feed_forward(p: TransformerLayerParams, x: Tensor) -> Tensor:
    """Position-wise relu(x w1 + b1) w2 + b2."""
    return T.add(T.matmul(T.relu(T.add(T.matmul(x, p.w1), p.b1)), p.w2), p.b2)


def transformer_layer(
    p: TransformerLayerParams,
    cfg: AttentionConfig,
    x: Tensor,
    mask: np.ndarray | None = None,
    training: bool = False,
    dropout_rate: float = 0.0,
    rng: Rng | None = None,
) -> Tensor:
    """Self-attention and feed-forward sublayers, post-norm arrangement.

    ``mask`` marks valid positions; masked positions are excluded as
    attention keys (their own outputs are garbage-in, garbage-out and
    must be ignored by the caller).
    """
    attended = multi_head_cross_attention(
        p.attn, cfg, x, x, mask, training=training, dropout_rate=dropout_rate, rng=rng
    ).context
    h1 = T.layer_norm(T.add(x, attended), p.ln1_gamma, p.ln1_beta)
    return T.layer_norm(T.add(h1, feed_forward(p, h1)), p.ln2_gamma, p.ln2_beta)
