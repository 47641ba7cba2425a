"""FCKP checkpoint container: named float32 tensors, little-endian.

Layout: magic "FCKP" | version u32 | tensor_count u32 | per tensor:
name_len u32 | name UTF-8 | rank u32 | dims u32 x rank | f32 data
row-major.  Model-level helpers additionally store the model config as
scalar entries under the reserved ``config.`` prefix so a checkpoint is
self-describing.
"""

from __future__ import annotations

import struct
from typing import Mapping, Sequence

import numpy as np

from .errors import BadMagic, ShapeMismatch, TruncatedFile, UnsupportedVersion
from .model import ModelConfig, ModelParams, build_model

FCKP_MAGIC = b"FCKP"
FCKP_VERSION = 1

_VARIANT_CODES = {"full": 0, "no_cross_attention": 1, "no_fusion": 2, "mlp_baseline": 3}
_CODE_VARIANTS = {v: k for k, v in _VARIANT_CODES.items()}


def save_checkpoint(tensors, path) -> None:
    """Write named arrays; duplicate names are an error."""
    if isinstance(tensors, Mapping):
        items = list(tensors.items())
    else:
        items = list(tensors)
    names = [n for n, _ in items]
    if len(names) != len(set(names)):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate tensor names: {dupes}")
    with open(path, "wb") as f:
        f.write(FCKP_MAGIC)
        f.write(struct.pack("<I", FCKP_VERSION))
        f.write(struct.pack("<I", len(items)))
        for name, t in items:
            arr = np.asarray(t.data if hasattr(t, "data") else t, dtype="<f4")
            enc = name.encode("utf-8")
            f.write(struct.pack("<I", len(enc)))
            f.write(enc)
            f.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(np.ascontiguousarray(arr).tobytes())


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"needed {n} bytes, got {len(buf)}")
    return buf


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read named float32 arrays back, in file order."""
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        magic = _read_exact(f, 4)
        if magic != FCKP_MAGIC:
            raise BadMagic(f"expected {FCKP_MAGIC!r}, got {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != FCKP_VERSION:
            raise UnsupportedVersion(f"FCKP version {version} not supported")
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4))
            name = _read_exact(f, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank)) if rank else ()
            n_items = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(_read_exact(f, 4 * n_items), dtype="<f4").reshape(dims)
            if name in out:
                raise ValueError(f"duplicate tensor name in file: {name!r}")
            out[name] = data.copy()
        if f.read(1) != b"":
            raise TruncatedFile("unexpected trailing bytes after the last tensor")
    return out


def _config_entries(cfg: ModelConfig) -> list[tuple[str, np.ndarray]]:
    # the 64-bit seed is split into 16-bit chunks so float32 stays lossless
    seed_parts = [(cfg.seed >> (16 * i)) & 0xFFFF for i in range(4)]
    scalars = {
        "config.d_emb_in": cfg.d_emb_in,
        "config.d_model": cfg.d_model,
        "config.heads": cfg.heads,
        "config.factors": cfg.factors,
        "config.d_mfb": cfg.d_mfb,
        "config.d_ff": cfg.d_ff,
        "config.n_layers": cfg.n_layers,
        "config.dropout": cfg.dropout,
        "config.variant": _VARIANT_CODES[cfg.variant],
        "config.dropout_on_projection": int(cfg.dropout_on_projection),
        "config.share_cross_params": int(cfg.share_cross_params),
        "config.mlp_hidden": cfg.mlp_hidden,
        **{f"config.seed{i}": p for i, p in enumerate(seed_parts)},
    }
    return [(k, np.asarray(val, dtype=np.float32)) for k, val in scalars.items()]


def _config_from_entries(entries: Mapping[str, np.ndarray]) -> ModelConfig:
    def geti(key: str) -> int:
        return int(round(float(entries[key])))

    seed = sum(geti(f"config.seed{i}") << (16 * i) for i in range(4))
    return ModelConfig(
        d_emb_in=geti("config.d_emb_in"),
        d_model=geti("config.d_model"),
        heads=geti("config.heads"),
        factors=geti("config.factors"),
        d_mfb=geti("config.d_mfb"),
        d_ff=geti("config.d_ff"),
        n_layers=geti("config.n_layers"),
        dropout=float(entries["config.dropout"]),
        variant=_CODE_VARIANTS[geti("config.variant")],
        seed=seed,
        dropout_on_projection=bool(geti("config.dropout_on_projection")),
        share_cross_params=bool(geti("config.share_cross_params")),
        mlp_hidden=geti("config.mlp_hidden"),
    )


def save_model(params: ModelParams, cfg: ModelConfig, path) -> None:
    """Self-describing checkpoint: config scalars plus all parameters."""
    save_checkpoint(_config_entries(cfg) + list(params.named_tensors()), path)


def load_model(path) -> tuple[ModelParams, ModelConfig]:
    """Rebuild the parameter structure from the stored config, then fill it."""
    entries = load_checkpoint(path)
    cfg = _config_from_entries(entries)
    params = build_model(cfg)
    expected = dict(params.named_tensors())
    stored = {k: v for k, v in entries.items() if not k.startswith("config.")}
    if set(stored) != set(expected):
        missing = sorted(set(expected) - set(stored))
        extra = sorted(set(stored) - set(expected))
        raise ValueError(f"checkpoint does not match the configured model; missing={missing} extra={extra}")
    for name, tensor in expected.items():
        if stored[name].shape != tensor.data.shape:
            raise ShapeMismatch(f"{name!r}: stored shape {stored[name].shape} != expected {tensor.data.shape}")
        tensor.data[...] = stored[name].astype(tensor.data.dtype)
    return params, cfg
