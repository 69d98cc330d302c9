"""Exception types shared across the package."""


class RetrospectError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(RetrospectError, ValueError):
    """Tensor shapes or sizes are inconsistent with the operation."""


class DomainError(RetrospectError, ValueError):
    """Input values outside the mathematical domain of the operation."""


class TapeError(RetrospectError, RuntimeError):
    """Misuse of the recording tape (wrong tape, non-scalar root, ...)."""


class GuidanceLinkageError(RetrospectError, RuntimeError):
    """A guidance tensor carries gradient linkage; it must be detached."""


class GradientMissingError(RetrospectError, KeyError):
    """A parameter has no entry in the gradient map."""


class DataFormatError(RetrospectError, ValueError):
    """Base class for dataset / snapshot file format errors."""


class BadMagicError(DataFormatError):
    """File header magic does not match the expected format."""


class TruncatedFileError(DataFormatError):
    """File ended before the declared payload was read."""


class CountMismatchError(DataFormatError):
    """Paired files declare inconsistent record counts."""


class ConfigError(RetrospectError, ValueError):
    """Run configuration is invalid or contains unknown keys."""
