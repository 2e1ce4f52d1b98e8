"""Sandpile growth in a convex container.

Evolves the standing-layer profile under a gradient constraint by projected
implicit Euler steps, recovers the rolling layer and boundary discharge from
transport rays, evaluates finite-time-convergence criteria, and ships
closed-form radial reference solutions for validation.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DataError,
    GeometryError,
    NumericalError,
    ResolutionError,
    SandflowError,
    SizeError,
    VerificationError,
)
from .geometry import Ball, BoundaryData, Box, ConvexPolygon, DomainSpec, Interval, build_domain  # noqa: F401
from .grid import Grid, ScalarField, build_grid, discretize_source  # noqa: F401
