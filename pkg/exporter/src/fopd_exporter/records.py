"""Line-delimited JSON opinion records: parsing, validation, grouping."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .errors import MissingModality, RecordValidationError

logger = logging.getLogger(__name__)

VALID_LABELS = (-1, 0, 1)
VALID_MODALITIES = ("timely", "trending")


@dataclass(frozen=True)
class OpinionRecord:
    company_id: str
    label: int
    modality: str
    text: str


def _parse_record(line: str, lineno: int) -> OpinionRecord:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as e:
        raise RecordValidationError(f"line {lineno}: not valid JSON ({e})")
    if not isinstance(raw, dict):
        raise RecordValidationError(f"line {lineno}: expected a JSON object")
    missing = [k for k in ("company_id", "label", "modality", "text") if k not in raw]
    if missing:
        raise RecordValidationError(f"line {lineno}: missing fields {missing}")
    company_id = raw["company_id"]
    if not isinstance(company_id, str) or not company_id:
        raise RecordValidationError(f"line {lineno}: company_id must be a non-empty string")
    label = raw["label"]
    if not isinstance(label, int) or isinstance(label, bool) or label not in VALID_LABELS:
        raise RecordValidationError(f"line {lineno}: label must be -1, 0, or +1, got {label!r}")
    modality = raw["modality"]
    if modality not in VALID_MODALITIES:
        raise RecordValidationError(f"line {lineno}: modality must be 'timely' or 'trending', got {modality!r}")
    text = raw["text"]
    if not isinstance(text, str):
        raise RecordValidationError(f"line {lineno}: text must be a string")
    return OpinionRecord(company_id, label, modality, text)


def read_records(path) -> list[OpinionRecord]:
    """Parse and validate every line before any encoding work starts.

    Records with empty (or whitespace-only) text are skipped with a
    warning; every other schema violation is a hard error.
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            record = _parse_record(line, lineno)
            if not record.text.strip():
                logger.warning("line %d: empty text for %s/%s, record skipped",
                               lineno, record.company_id, record.modality)
                continue
            records.append(record)
    return records


@dataclass
class CompanyGroup:
    company_id: str
    label: int
    timely: list[str]
    trending: list[str]


def group_records(records: list[OpinionRecord]) -> list[CompanyGroup]:
    """Group records per company, keeping first-seen company order.

    Labels must agree across all records of a company, and both
    modalities must be present.
    """
    groups: dict[str, CompanyGroup] = {}
    for r in records:
        group = groups.get(r.company_id)
        if group is None:
            group = groups[r.company_id] = CompanyGroup(r.company_id, r.label, [], [])
        elif group.label != r.label:
            raise RecordValidationError(
                f"company {r.company_id!r} has conflicting labels {group.label} and {r.label}")
        (group.timely if r.modality == "timely" else group.trending).append(r.text)
    for group in groups.values():
        if not group.timely or not group.trending:
            missing = "timely" if not group.timely else "trending"
            raise MissingModality(f"company {group.company_id!r} has no {missing} records")
    return list(groups.values())
