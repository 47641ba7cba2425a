"""Exporter error types."""


class ExporterError(Exception):
    """Base class for exporter failures."""


class RecordValidationError(ExporterError):
    """An input record violates the schema (bad label, modality, or field)."""


class MissingModality(ExporterError):
    """A company lacks records in one of the two modalities."""


class WidthMismatch(ExporterError):
    """The encoder's hidden width is not the required 768."""
