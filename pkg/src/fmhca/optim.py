"""Adam optimizer with bias correction, keyed by parameter name."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams


@dataclass
class AdamState:
    """First/second moment buffers plus the shared step counter."""

    lr: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ModelParams, grads: dict, state: AdamState) -> tuple[ModelParams, AdamState]:
    """One in-place update.

    Parameters absent from ``grads`` are left untouched (their moments do
    not decay either), so a parameter the loss never reached is a strict
    no-op for any optimizer state.
    """
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, tensor in params.named_tensors():
        if name not in grads:
            continue
        g = grads[name]
        g = np.asarray(g.data if hasattr(g, "data") else g, dtype=tensor.data.dtype)
        if g.shape != tensor.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {tensor.data.shape} for {name!r}")
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        tensor.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
