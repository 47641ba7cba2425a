"""End-to-end model: projection, sequence prep, cross-modal exchange,
per-branch transformers, fusion, and the 3-class head.

Variants cover the ablations: ``full`` (cross-attention + factorized
bilinear fusion), ``no_cross_attention`` (branches never exchange
information before fusion), ``no_fusion`` (concatenation + linear map
instead of bilinear pooling), and ``mlp_baseline`` (mean-pooled
projections through a two-layer MLP).

Each sample is processed as its own variable-length sequence; padding
exists only inside ``Batch`` containers and is sliced away here, so
padded values can never reach a logit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, MhcaParams, fmhca_two_stage, glorot, init_mhca_params
from .data import Batch
from .errors import EmptyBatch, ShapeMismatch
from .fusion import MfbParams, concat_fusion, init_mfb_params, mfb_pool
from .layers import (
    TransformerLayerParams,
    init_transformer_params,
    positional_encoding,
    prepend_cls,
    transformer_layer,
)
from .rng import Rng
from .tensor import Tensor

VARIANTS = ("full", "no_cross_attention", "no_fusion", "mlp_baseline")

LABELS = (-1, 0, 1)
LABEL_TO_INDEX = {-1: 0, 0: 1, 1: 2}
INDEX_TO_LABEL = np.array(LABELS, dtype=np.int64)


@dataclass(frozen=True)
class ModelConfig:
    d_emb_in: int = 768
    d_model: int = 128
    heads: int = 8
    factors: int = 16
    d_mfb: int = 128
    d_ff: int = 512
    n_layers: int = 1
    dropout: float = 0.1
    variant: str = "full"
    seed: int = 0
    dropout_on_projection: bool = True
    share_cross_params: bool = False
    mlp_hidden: int = 128

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if min(self.d_emb_in, self.d_model, self.heads, self.factors,
               self.d_mfb, self.d_ff, self.n_layers, self.mlp_hidden) < 1:
            raise ValueError("all dimensions must be positive")
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def attention(self) -> AttentionConfig:
        return AttentionConfig(d_model=self.d_model, heads=self.heads)


@dataclass
class ModelParams:
    """Every learnable tensor of one model instance, by role.

    Only the fields the configured variant uses are populated; names from
    :meth:`named_tensors` are unique and stable, and double as checkpoint
    keys and gradient-map keys.
    """

    proj_w: Tensor
    proj_b: Tensor
    cls_f: Tensor | None = None
    cls_h: Tensor | None = None
    cross1: MhcaParams | None = None
    cross2: MhcaParams | None = None
    enc_f: list[TransformerLayerParams] = field(default_factory=list)
    enc_h: list[TransformerLayerParams] = field(default_factory=list)
    mfb: MfbParams | None = None
    fuse_w: Tensor | None = None
    fuse_b: Tensor | None = None
    clf_w: Tensor | None = None
    clf_b: Tensor | None = None
    mlp_w1: Tensor | None = None
    mlp_b1: Tensor | None = None
    mlp_w2: Tensor | None = None
    mlp_b2: Tensor | None = None
    shared_cross: bool = False

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = [("proj.w", self.proj_w), ("proj.b", self.proj_b)]
        if self.cls_f is not None:
            out += [("cls.f", self.cls_f), ("cls.h", self.cls_h)]
        if self.cross1 is not None:
            out += self.cross1.named("cross1")
            if not self.shared_cross:
                out += self.cross2.named("cross2")
        for i, layer in enumerate(self.enc_f):
            out += layer.named(f"enc_f.{i}")
        for i, layer in enumerate(self.enc_h):
            out += layer.named(f"enc_h.{i}")
        if self.mfb is not None:
            out += self.mfb.named("mfb")
        if self.fuse_w is not None:
            out += [("fuse.w", self.fuse_w), ("fuse.b", self.fuse_b)]
        if self.clf_w is not None:
            out += [("clf.w", self.clf_w), ("clf.b", self.clf_b)]
        if self.mlp_w1 is not None:
            out += [("mlp.w1", self.mlp_w1), ("mlp.b1", self.mlp_b1),
                    ("mlp.w2", self.mlp_w2), ("mlp.b2", self.mlp_b2)]
        names = [n for n, _ in out]
        assert len(names) == len(set(names)), "parameter names must be unique"
        for name, t in out:
            t.name = name
        return out

    def n_parameters(self) -> int:
        return sum(t.size for _, t in self.named_tensors())

    def zero_grads(self) -> None:
        for _, t in self.named_tensors():
            t.zero_grad()


@dataclass
class ForwardTrace:
    """Outputs of one forward pass over a batch."""

    logits: Tensor  # (B, 3)
    probabilities: Tensor  # (B, 3), rows sum to 1
    s1: list[np.ndarray | None]  # stage-1 attention map per sample
    s2: list[np.ndarray | None]  # stage-2 attention map per sample


def build_model(cfg: ModelConfig) -> ModelParams:
    """Seeded initialization: Glorot-uniform matrices, zero biases,
    unit layer-norm gains, and small-normal summary tokens."""
    rng = Rng(cfg.seed)
    d = cfg.d_model
    acfg = cfg.attention
    proj_w = glorot(rng, cfg.d_emb_in, d)
    proj_b = Tensor(np.zeros(d), requires_grad=True)
    params = ModelParams(proj_w=proj_w, proj_b=proj_b, shared_cross=cfg.share_cross_params)

    if cfg.variant == "mlp_baseline":
        params.mlp_w1 = glorot(rng, cfg.mlp_hidden, 2 * d)
        params.mlp_b1 = Tensor(np.zeros(cfg.mlp_hidden), requires_grad=True)
        params.mlp_w2 = glorot(rng, 3, cfg.mlp_hidden)
        params.mlp_b2 = Tensor(np.zeros(3), requires_grad=True)
        params.named_tensors()
        return params

    params.cls_f = Tensor(0.02 * rng.normal(d), requires_grad=True)
    params.cls_h = Tensor(0.02 * rng.normal(d), requires_grad=True)
    if cfg.variant in ("full", "no_fusion"):
        params.cross1 = init_mhca_params(acfg, rng)
        params.cross2 = params.cross1 if cfg.share_cross_params else init_mhca_params(acfg, rng)
    params.enc_f = [init_transformer_params(acfg, cfg.d_ff, rng) for _ in range(cfg.n_layers)]
    params.enc_h = [init_transformer_params(acfg, cfg.d_ff, rng) for _ in range(cfg.n_layers)]
    if cfg.variant == "no_fusion":
        params.fuse_w = glorot(rng, cfg.d_mfb, 2 * d)
        params.fuse_b = Tensor(np.zeros(cfg.d_mfb), requires_grad=True)
    else:
        params.mfb = init_mfb_params(d_in=d, d_mfb=cfg.d_mfb, factors=cfg.factors, rng=rng)
    params.clf_w = glorot(rng, 3, cfg.d_mfb)
    params.clf_b = Tensor(np.zeros(3), requires_grad=True)
    params.named_tensors()
    return params


def _project(params: ModelParams, cfg: ModelConfig, rows: np.ndarray,
             training: bool, rng: Rng | None) -> Tensor:
    out = T.relu(T.add(T.matmul(Tensor(rows), params.proj_w), params.proj_b))
    if cfg.dropout_on_projection:
        out = T.dropout(out, cfg.dropout, rng, training)
    return out


def forward(
    params: ModelParams,
    cfg: ModelConfig,
    batch: Batch,
    training: bool = False,
    rng: Rng | None = None,
) -> ForwardTrace:
    """Run the configured variant over a batch, one sample at a time."""
    if len(batch) == 0:
        raise EmptyBatch("forward over an empty batch")
    if batch.d_emb != cfg.d_emb_in:
        raise ShapeMismatch(f"batch embedding width {batch.d_emb} != configured {cfg.d_emb_in}")

    acfg = cfg.attention
    logit_rows: list[Tensor] = []
    s1_all: list[np.ndarray | None] = []
    s2_all: list[np.ndarray | None] = []

    for i in range(len(batch)):
        f_rows = batch.f_pad[i][batch.f_mask[i]]
        h_rows = batch.h_pad[i][batch.h_mask[i]]
        f_proj = _project(params, cfg, f_rows, training, rng)
        h_proj = _project(params, cfg, h_rows, training, rng)

        if cfg.variant == "mlp_baseline":
            pooled = T.concat([T.mean_rows(f_proj), T.mean_rows(h_proj)], axis=0)
            hidden = T.relu(T.add(T.matmul(params.mlp_w1, pooled), params.mlp_b1))
            hidden = T.dropout(hidden, cfg.dropout, rng, training)
            logit_rows.append(T.add(T.matmul(params.mlp_w2, hidden), params.mlp_b2))
            s1_all.append(None)
            s2_all.append(None)
            continue

        f_seq = prepend_cls(f_proj, params.cls_f)
        f_seq = T.add(f_seq, positional_encoding(f_seq.shape[0], cfg.d_model))
        h_seq = prepend_cls(h_proj, params.cls_h)
        h_seq = T.add(h_seq, positional_encoding(h_seq.shape[0], cfg.d_model))

        if cfg.variant in ("full", "no_fusion"):
            f_branch, s1, s2 = fmhca_two_stage(
                params.cross1, params.cross2, acfg, h_seq, f_seq,
                training=training, dropout_rate=cfg.dropout, rng=rng,
            )
            s1_all.append(s1.data)
            s2_all.append(s2.data)
        else:
            f_branch = f_seq
            s1_all.append(None)
            s2_all.append(None)
        h_branch = h_seq
        for layer in params.enc_f:
            f_branch = transformer_layer(layer, acfg, f_branch,
                                         training=training, dropout_rate=cfg.dropout, rng=rng)
        for layer in params.enc_h:
            h_branch = transformer_layer(layer, acfg, h_branch,
                                         training=training, dropout_rate=cfg.dropout, rng=rng)

        f_cls = T.row(f_branch, 0)
        h_cls = T.row(h_branch, 0)
        if cfg.variant == "no_fusion":
            z = concat_fusion(f_cls, h_cls, params.fuse_w, params.fuse_b)
        else:
            z = mfb_pool(params.mfb, f_cls, h_cls)
        logit_rows.append(T.add(T.matmul(params.clf_w, z), params.clf_b))

    logits = T.stack_rows(logit_rows)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probabilities = Tensor(e / e.sum(axis=1, keepdims=True))
    return ForwardTrace(logits=logits, probabilities=probabilities, s1=s1_all, s2=s2_all)


def predict(probabilities) -> int:
    """Label for one probability (or logit) row; ties go to the lowest index."""
    p = probabilities.data if isinstance(probabilities, Tensor) else np.asarray(probabilities)
    if p.shape != (3,):
        raise ShapeMismatch(f"expected a 3-vector, got shape {p.shape}")
    return int(INDEX_TO_LABEL[int(np.argmax(p))])


def predict_batch(trace: ForwardTrace) -> np.ndarray:
    """Labels for every row of a forward trace."""
    return INDEX_TO_LABEL[np.argmax(trace.probabilities.data, axis=1)]
