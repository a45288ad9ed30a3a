"""Exception hierarchy shared by every module."""


class ArtifactError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionError(ArtifactError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(PreconditionError):
    """A point or parameter lies outside the admissible domain."""


class SaturationError(ArtifactError, ArithmeticError):
    """A closed-form map saturates in double precision (point too close to a cusp tip)."""


class InversionError(ArtifactError, ArithmeticError):
    """A branch check failed while inverting a map."""


class ConstructionError(ArtifactError):
    """A domain or map could not be built with the requested parameters."""


class NumericalError(ArtifactError, ArithmeticError):
    """A numerical procedure failed (degenerate fit, collapse, empty sample)."""


class ConsistencyError(NumericalError):
    """Two-sided bounds came out inverted."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoPathError(NumericalError):
    """Two points lie in different components of a sampling graph."""


class ValidationError(ArtifactError, ValueError):
    """A configuration document failed validation."""

    def __init__(self, message, path=()):
        self.path = tuple(path)
        where = ".".join(str(p) for p in self.path) or "<root>"
        super().__init__(f"{where}: {message}")
