"""Exception types shared across the package."""


class FndetectError(Exception):
    """Base class for all package errors."""


class SchemaError(FndetectError):
    """Input file is structurally wrong (missing column, bad header)."""


class DataError(FndetectError):
    """Input rows are malformed (unknown label, duplicate id, bad value)."""


class ConfigError(FndetectError):
    """Configuration value is invalid or inconsistent."""


class SpecError(ConfigError):
    """Model or encoder spec violates its own constraints."""


class ShapeError(FndetectError):
    """Array arguments have mismatched or invalid shapes."""


class LoadError(FndetectError):
    """A checkpoint or pretrained artifact cannot be loaded."""


class PreconditionError(FndetectError):
    """A documented operation precondition does not hold."""


class TrainingError(FndetectError):
    """Training aborted (non-finite loss or similar)."""


class NumericsError(FndetectError):
    """A forward pass produced non-finite values."""
