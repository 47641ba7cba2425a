"""Bridge from raw opinion texts to FOPD embedding datasets.

Reads line-delimited JSON opinion records, encodes each text with a
BERT-family encoder (final-layer [CLS] vector), groups the vectors per
company into timely/trending matrices, and writes the binary FOPD
container consumed by the sentiment engine.
"""

from .errors import ExporterError, MissingModality, RecordValidationError, WidthMismatch
from .records import OpinionRecord, group_records, read_records
from .export import export_embeddings

__version__ = "0.1.0"
