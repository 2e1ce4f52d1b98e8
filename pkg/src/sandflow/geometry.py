"""Convex container geometry and boundary data.

The container is an open bounded convex set with vertical walls whose height
is prescribed at finitely many boundary samples.  Supported shapes: an
interval in 1D; a ball, a counterclockwise convex polygon, or an axis-aligned
box in 2D.  Every shape answers point membership, distance to the boundary,
ray exit lengths, and arclength-uniform boundary sampling; everything
downstream (grids, eikonal profiles, transport rays) is built from these
queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, GeometryError

_REL_TOL = 1e-12


def _as_points(x, ndim):
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[1] != ndim:
        raise GeometryError(f"expected points in {ndim}D, got shape {pts.shape}")
    return pts


class Shape:
    """Base class; subclasses implement the geometric queries."""

    ndim = None

    def contains(self, points):
        raise NotImplementedError

    def boundary_distance(self, points):
        raise NotImplementedError

    def ray_exit(self, origin, direction):
        raise NotImplementedError

    def ray_exit_many(self, origins, directions):
        """Exit length along each (origin, unit direction) pair; vectorized."""
        origins = _as_points(origins, self.ndim)
        directions = _as_points(directions, self.ndim)
        return np.array(
            [self.ray_exit(o, d) for o, d in zip(origins, directions)]
        )

    def boundary_samples(self, m):
        raise NotImplementedError

    def diameter(self):
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def perimeter(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Interval(Shape):
    a: float
    b: float
    ndim = 1

    def __post_init__(self):
        if not self.a < self.b:
            raise GeometryError(f"interval needs a < b, got [{self.a}, {self.b}]")

    def contains(self, points):
        pts = _as_points(points, 1)[:, 0]
        tol = _REL_TOL * self.diameter()
        return (pts > self.a + tol) & (pts < self.b - tol)

    def boundary_distance(self, points):
        pts = _as_points(points, 1)[:, 0]
        return np.minimum(pts - self.a, self.b - pts)

    def ray_exit(self, origin, direction):
        x = float(np.asarray(origin).reshape(-1)[0])
        d = float(np.asarray(direction).reshape(-1)[0])
        if d > 0:
            return (self.b - x) / d
        if d < 0:
            return (self.a - x) / d
        return np.inf

    def ray_exit_many(self, origins, directions):
        x = _as_points(origins, 1)[:, 0]
        d = _as_points(directions, 1)[:, 0]
        with np.errstate(divide="ignore"):
            return np.where(d > 0, (self.b - x) / np.where(d > 0, d, 1.0),
                            np.where(d < 0, (self.a - x) / np.where(d < 0, d, 1.0), np.inf))

    def boundary_samples(self, m):
        # 1D always uses exactly the two endpoints.
        return np.array([[self.a], [self.b]])

    def diameter(self):
        return self.b - self.a

    def bounding_box(self):
        return np.array([self.a]), np.array([self.b])

    def perimeter(self):
        raise GeometryError("perimeter undefined in 1D")


@dataclass(frozen=True, eq=False)
class ConvexPolygon(Shape):
    """Convex polygon with vertices listed counterclockwise."""

    vertices: np.ndarray
    ndim = 2

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise GeometryError("polygon needs at least 3 vertices of dimension 2")
        object.__setattr__(self, "vertices", verts)
        edges = np.roll(verts, -1, axis=0) - verts
        if np.any(np.hypot(edges[:, 0], edges[:, 1]) < _REL_TOL):
            raise GeometryError("polygon has a zero-length edge")
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        scale = float(np.max(np.abs(edges))) ** 2
        if np.any(cross < _REL_TOL * scale):
            raise GeometryError("polygon is not convex and counterclockwise")
        # Outward edge normals and offsets: inside iff n.x <= b for all edges.
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        object.__setattr__(self, "_normals", normals)
        object.__setattr__(self, "_offsets", np.einsum("ij,ij->i", normals, verts))

    def contains(self, points):
        pts = _as_points(points, 2)
        tol = _REL_TOL * self.diameter()
        slack = self._offsets[None, :] - pts @ self._normals.T
        return np.all(slack > tol, axis=1)

    def boundary_distance(self, points):
        pts = _as_points(points, 2)
        return np.min(self._offsets[None, :] - pts @ self._normals.T, axis=1)

    def ray_exit(self, origin, direction):
        x = np.asarray(origin, dtype=float).reshape(2)
        d = np.asarray(direction, dtype=float).reshape(2)
        nd = self._normals @ d
        slack = self._offsets - self._normals @ x
        with np.errstate(divide="ignore"):
            t = np.where(nd > _REL_TOL, slack / np.where(nd > _REL_TOL, nd, 1.0), np.inf)
        return float(np.min(t))

    def ray_exit_many(self, origins, directions):
        x = _as_points(origins, 2)
        d = _as_points(directions, 2)
        nd = d @ self._normals.T
        slack = self._offsets[None, :] - x @ self._normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(nd > _REL_TOL, slack / np.where(nd > _REL_TOL, nd, 1.0), np.inf)
        return np.min(t, axis=1)

    def boundary_samples(self, m):
        verts = self.vertices
        seg = np.roll(verts, -1, axis=0) - verts
        lens = np.hypot(seg[:, 0], seg[:, 1])
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        total = cum[-1]
        s = np.arange(m) * total / m
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lens) - 1)
        frac = (s - cum[idx]) / lens[idx]
        return verts[idx] + frac[:, None] * seg[idx]

    def diameter(self):
        verts = self.vertices
        d2 = ((verts[:, None, :] - verts[None, :, :]) ** 2).sum(-1)
        return float(np.sqrt(d2.max()))

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def perimeter(self):
        seg = np.roll(self.vertices, -1, axis=0) - self.vertices
        return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


class Box(ConvexPolygon):
    """Axis-aligned box, realized as its counterclockwise polygon."""

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float).reshape(2)
        hi = np.asarray(hi, dtype=float).reshape(2)
        if not np.all(lo < hi):
            raise GeometryError(f"box needs lo < hi componentwise, got {lo}, {hi}")
        verts = np.array(
            [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
        )
        super().__init__(verts)
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))


@dataclass(frozen=True, eq=False)
class Ball(Shape):
    center: np.ndarray
    radius: float
    ndim = 2

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(2))

    def contains(self, points):
        pts = _as_points(points, 2)
        tol = _REL_TOL * self.diameter()
        r = np.hypot(*(pts - self.center).T)
        return r < self.radius - tol

    def boundary_distance(self, points):
        pts = _as_points(points, 2)
        return self.radius - np.hypot(*(pts - self.center).T)

    def ray_exit(self, origin, direction):
        x = np.asarray(origin, dtype=float).reshape(2) - self.center
        d = np.asarray(direction, dtype=float).reshape(2)
        d = d / np.linalg.norm(d)
        b = float(x @ d)
        disc = b * b + self.radius**2 - float(x @ x)
        return -b + np.sqrt(max(disc, 0.0))

    def ray_exit_many(self, origins, directions):
        x = _as_points(origins, 2) - self.center
        d = _as_points(directions, 2)
        d = d / np.linalg.norm(d, axis=1)[:, None]
        b = np.einsum("ij,ij->i", x, d)
        disc = b * b + self.radius**2 - np.einsum("ij,ij->i", x, x)
        return -b + np.sqrt(np.maximum(disc, 0.0))

    def boundary_samples(self, m):
        theta = 2.0 * np.pi * np.arange(m) / m
        return self.center + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)

    def diameter(self):
        return 2.0 * self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def perimeter(self):
        return 2.0 * np.pi * self.radius


@dataclass(frozen=True)
class DomainSpec:
    """Container description: dimension, shape, and boundary sample count."""

    dimension: int
    shape: Shape
    boundary_sample_count: int = 256

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise GeometryError(f"grid solver supports dimensions 1 and 2, got {self.dimension}")
        if self.shape.ndim != self.dimension:
            raise GeometryError("shape dimension does not match the declared dimension")
        if self.boundary_sample_count < 2:
            raise GeometryError("need at least 2 boundary samples")


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Boundary samples with wall heights.

    Immutable after construction; safe to share across threads.
    """

    points: np.ndarray           # (m, N)
    phi: np.ndarray              # (m,)
    arc_weight: np.ndarray       # arclength measure carried by each sample
    domain: DomainSpec

    def __post_init__(self):
        if len(self.points) != len(self.phi):
            raise DataError("boundary points and phi must be length-matched")
        if np.any(self.phi < 0):
            raise DataError("wall heights must be nonnegative")
        if not np.all(np.isfinite(self.phi)):
            raise DataError("wall heights must be finite")

    @property
    def m(self):
        return len(self.points)

    def min_phi(self):
        return float(self.phi.min())


def build_domain(spec: DomainSpec, phi_fn) -> tuple[DomainSpec, BoundaryData]:
    """Place boundary samples and evaluate the wall height on them.

    Samples are arclength-uniform for 2D shapes; the interval uses its two
    endpoints.  ``phi_fn`` maps a boundary point (array of length N) to a
    height and must be nonnegative on the samples.
    """
    shape = spec.shape
    m = 2 if spec.dimension == 1 else spec.boundary_sample_count
    points = shape.boundary_samples(m)
    phi = np.array([float(phi_fn(p)) for p in points])
    if np.any(phi < 0):
        raise DataError("phi_fn is negative on a boundary sample")
    if spec.dimension == 1:
        arc = np.ones(len(points))
    else:
        arc = np.full(len(points), shape.perimeter() / len(points))
    # Samples come from the shape's own parametrization, so they sit on the
    # boundary up to roundoff; assert the invariant anyway.
    dist = np.abs(shape.boundary_distance(points))
    if np.any(dist > 1e-12 * shape.diameter() + 1e-15):
        raise GeometryError("boundary samples drifted off the boundary")
    return spec, BoundaryData(points=points, phi=phi, arc_weight=arc, domain=spec)
