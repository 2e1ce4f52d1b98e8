"""Exception types shared across the package."""


class SandflowError(Exception):
    """Base class for all package errors."""


class GeometryError(SandflowError):
    """Invalid container geometry (non-convex polygon, empty interior, ...)."""


class DataError(SandflowError):
    """Invalid field or boundary data (negative source, wrong length, ...)."""


class ResolutionError(SandflowError):
    """Grid spacing incompatible with the domain size."""


class SizeError(SandflowError):
    """Problem too large for an exhaustive reference solver."""


class NumericalError(SandflowError):
    """An iterative solve failed to converge within its budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(SandflowError):
    """Malformed or inconsistent run configuration."""


class VerificationError(SandflowError):
    """A verification run breached its tolerance schedule."""
