"""PCA-cascade dense architecture search, feature selection and dataset utilities."""

from cascademl.errors import (
    CascadeError,
    DivergenceError,
    NoFeaturesError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "CascadeError",
    "DivergenceError",
    "NoFeaturesError",
    "ValidationError",
    "__version__",
]
