"""FOPD container writer (bit-exact, little-endian).

Layout: magic "FOPD" | version u32=1 | d_emb u32 | sample_count u64, then
per sample: id_len u32 | id UTF-8 | label i8 | m u32 | n u32 |
F float32[m*d_emb] | H float32[n*d_emb], row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FOPD_MAGIC = b"FOPD"
FOPD_VERSION = 1


@dataclass
class EmbeddedCompany:
    company_id: str
    label: int
    F: np.ndarray  # (m, d) float32, timely
    H: np.ndarray  # (n, d) float32, trending


def write_fopd(companies: list[EmbeddedCompany], path) -> None:
    if not companies:
        raise ValueError("refusing to write an empty FOPD file")
    d_emb = companies[0].F.shape[1]
    for c in companies:
        if c.F.ndim != 2 or c.H.ndim != 2 or c.F.shape[1] != d_emb or c.H.shape[1] != d_emb:
            raise ValueError(f"company {c.company_id!r}: inconsistent embedding width")
        if c.F.shape[0] < 1 or c.H.shape[0] < 1:
            raise ValueError(f"company {c.company_id!r}: each modality needs at least one row")
        if not (np.isfinite(c.F).all() and np.isfinite(c.H).all()):
            raise ValueError(f"company {c.company_id!r}: non-finite embedding values")
    with open(path, "wb") as f:
        f.write(FOPD_MAGIC)
        f.write(struct.pack("<I", FOPD_VERSION))
        f.write(struct.pack("<I", d_emb))
        f.write(struct.pack("<Q", len(companies)))
        for c in companies:
            cid = c.company_id.encode("utf-8")
            f.write(struct.pack("<I", len(cid)))
            f.write(cid)
            f.write(struct.pack("<b", c.label))
            f.write(struct.pack("<I", c.F.shape[0]))
            f.write(struct.pack("<I", c.H.shape[0]))
            f.write(np.ascontiguousarray(c.F, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(c.H, dtype="<f4").tobytes())
