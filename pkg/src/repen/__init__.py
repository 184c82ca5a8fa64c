"""Resampling-penalized model selection for histogram regression."""

__version__ = "0.1.0"

from .estimator import HistogramSelector  # noqa: E402
from .exceptions import (  # noqa: E402
    DegenerateConditioningError,
    DegeneratePathError,
    EmptyModelSetError,
    UndefinedModelError,
)

__all__ = [
    "__version__",
    "HistogramSelector",
    "UndefinedModelError",
    "DegenerateConditioningError",
    "EmptyModelSetError",
    "DegeneratePathError",
]
