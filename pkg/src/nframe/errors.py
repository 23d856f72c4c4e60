"""Exception types shared across the package."""


class NFrameError(Exception):
    """Base class for all package errors."""


class InvalidInputError(NFrameError):
    """Raised when a matrix or image contains non-finite or malformed data."""


class UndefinedStableRankError(NFrameError):
    """Raised when stable rank is requested for a zero matrix (sigma_1 = 0)."""


class ShapeError(NFrameError):
    """Raised when operands have incompatible shapes."""


class DegenerateInputError(NFrameError):
    """Raised when an input is degenerate (zero covariance, identical points, ...)."""


class InvalidSpecError(NFrameError):
    """Raised when an augmentation spec has out-of-range parameters."""


class FrameError(NFrameError):
    """Raised when a frame violates its invariants (k < 2, duplicate labels, ...)."""


class ConfigError(NFrameError):
    """Raised for invalid run or analysis configuration."""


class IngestError(NFrameError):
    """Raised when an external frame directory cannot be ingested."""


class ManifestError(NFrameError):
    """Raised when a model bundle or its manifest is invalid."""


class InferenceError(NFrameError):
    """Raised when graph evaluation fails; carries tensor context in the message."""
