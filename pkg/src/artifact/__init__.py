"""Numerical estimates of invariant distances and metrics on cusp domains, with visibility and dynamics experiments."""

from .errors import (ArtifactError, ConsistencyError, ConstructionError, DomainError, InversionError,
                     NoPathError, NumericalError, PreconditionError, SaturationError, ValidationError)

__version__ = "0.1.0"

__all__ = [
    "ArtifactError", "ConsistencyError", "ConstructionError", "DomainError", "InversionError", "NoPathError",
    "NumericalError", "PreconditionError", "SaturationError", "ValidationError", "__version__",
]
