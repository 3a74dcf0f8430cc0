"""Heat flow, capacity and random walks on glued weighted manifold complexes."""

__version__ = "0.1.0"

from .errors import (
    BoundaryIntersectionError,
    ConfigError,
    GlueAmbiguityError,
    GluedHeatError,
    HypothesisViolationError,
    InvalidParameterError,
    MeshComplianceError,
    NonIntegrableWeightError,
    NumericError,
    UnsupportedIntersectionError,
)

__all__ = [
    "__version__",
    "GluedHeatError",
    "ConfigError",
    "InvalidParameterError",
    "HypothesisViolationError",
    "GlueAmbiguityError",
    "BoundaryIntersectionError",
    "UnsupportedIntersectionError",
    "NonIntegrableWeightError",
    "MeshComplianceError",
    "NumericError",
]
