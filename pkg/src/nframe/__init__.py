"""Neural-frame probing: local representation geometry of vision models.

Submodules are imported lazily by callers; keeping this module light lets
the CLI pin BLAS thread counts before numpy loads.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateInputError,
    FrameError,
    IngestError,
    InferenceError,
    InvalidInputError,
    InvalidSpecError,
    ManifestError,
    NFrameError,
    ShapeError,
    UndefinedStableRankError,
)

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "FrameError",
    "IngestError",
    "InferenceError",
    "InvalidInputError",
    "InvalidSpecError",
    "ManifestError",
    "NFrameError",
    "ShapeError",
    "UndefinedStableRankError",
    "__version__",
]
