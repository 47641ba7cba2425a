"""Exception types shared across the package."""


class FmhcaError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(FmhcaError):
    """Operands have incompatible shapes."""


class AllMasked(FmhcaError):
    """A softmax row (or attention key set) has no valid entry."""


class DoubleBackward(FmhcaError):
    """backward() was called twice on the same loss without rebuilding the graph."""


class BadMagic(FmhcaError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersion(FmhcaError):
    """File carries a format version this build does not understand."""


class TruncatedFile(FmhcaError):
    """File ended before the declared payload was read."""


class NonFiniteValue(FmhcaError):
    """A NaN or Inf was found where only finite values are allowed."""


class NonFiniteLoss(FmhcaError):
    """Training loss became NaN or Inf; the run is aborted."""


class EmptyBatch(FmhcaError):
    """A forward pass received a batch with zero samples."""


class EmptyDataset(FmhcaError):
    """An operation that needs at least one sample received none."""


class GradCheckFailed(FmhcaError):
    """Analytic and numeric gradients disagree beyond the requested tolerance."""
