"""End-to-end export: records -> validation -> encoding -> FOPD."""

from __future__ import annotations

import logging

from .encoder import ClsEncoder, DEFAULT_ENCODER
from .fopd import EmbeddedCompany, write_fopd
from .records import group_records, read_records

logger = logging.getLogger(__name__)


def export_embeddings(
    input_path,
    out_path,
    encoder: str | ClsEncoder = DEFAULT_ENCODER,
    max_tokens: int = 128,
    batch_size: int = 8,
    device: str = "cpu",
) -> int:
    """Encode every opinion and write one FOPD sample per company.

    All records are parsed and validated before the encoder touches any
    text.  Returns the number of exported companies.
    """
    groups = group_records(read_records(input_path))
    if not groups:
        raise ValueError(f"no usable records in {input_path}")
    enc = encoder if isinstance(encoder, ClsEncoder) else ClsEncoder(encoder, device=device)
    companies = []
    for group in groups:
        companies.append(EmbeddedCompany(
            company_id=group.company_id,
            label=group.label,
            F=enc.encode(group.timely, max_tokens=max_tokens, batch_size=batch_size),
            H=enc.encode(group.trending, max_tokens=max_tokens, batch_size=batch_size),
        ))
        logger.info("encoded %s: %d timely, %d trending",
                    group.company_id, len(group.timely), len(group.trending))
    write_fopd(companies, out_path)
    return len(companies)
