"""Multi-order Chebyshev graph convolution engine."""

from ._mkgcn import (
    ConfigError,
    Error,
    InvariantViolation,
    ShapeMismatch,
    __version__,
    affinity,
    chebyshev_basis,
    cross_validate,
    khop_reach,
    laplacian,
    predict,
    run_cli,
    simulate,
)

__all__ = [
    "ConfigError",
    "Error",
    "InvariantViolation",
    "ShapeMismatch",
    "__version__",
    "affinity",
    "chebyshev_basis",
    "cross_validate",
    "khop_reach",
    "laplacian",
    "predict",
    "run_cli",
    "simulate",
]
