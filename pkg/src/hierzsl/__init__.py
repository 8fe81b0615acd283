"""Hierarchical zero-shot classification with graph-regularised projections."""

__version__ = "0.1.0"

from hierzsl.errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    HZSLError,
    IsolatedVertexError,
    NumericalError,
    ShapeError,
    SylvesterError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "HZSLError",
    "IsolatedVertexError",
    "NumericalError",
    "ShapeError",
    "SylvesterError",
]
