"""Cross-modal financial opinion sentiment engine.

Two opinion streams per company (timely news-style texts and trending
social-style texts, both as precomputed embeddings) are exchanged through
two-stage multi-head cross-attention, refined by per-branch transformer
layers, fused with factorized bilinear pooling, and classified into
negative / neutral / positive sentiment.  Everything runs on a small
self-contained reverse-mode autodiff core so gradients can be verified
against finite differences.
"""

from .errors import (
    AllMasked,
    BadMagic,
    DoubleBackward,
    EmptyBatch,
    EmptyDataset,
    FmhcaError,
    GradCheckFailed,
    NonFiniteLoss,
    NonFiniteValue,
    ShapeMismatch,
    TruncatedFile,
    UnsupportedVersion,
)
from .rng import Rng
from .tensor import Tensor, backward, get_precision, set_precision

__version__ = "0.1.0"
