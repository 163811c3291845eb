"""Exception types shared across the package.

Every validation failure raises one of these instead of a bare ValueError so
callers (and the CLI) can distinguish shape problems from bad parameter
values from malformed files.
"""


class BurstSrError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(BurstSrError):
    """Operand shapes are inconsistent with the operation's contract."""


class ValidationError(BurstSrError):
    """A parameter value violates a precondition (sign, range, divisibility)."""


class WeightFormatError(BurstSrError):
    """Base class for weight-container problems."""


class HeaderError(WeightFormatError):
    """Weight file header is malformed (magic, version, JSON, duplicate names)."""


class PayloadError(WeightFormatError):
    """Weight file payload is truncated or has trailing bytes."""


class WeightValidationError(WeightFormatError):
    """Loaded tensors do not match what the model config declares."""


class ImageFormatError(BurstSrError):
    """A file could not be read or written as a supported PNG image."""
