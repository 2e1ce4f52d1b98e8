"""Cell-centered uniform grid over a convex container, plus grid fields.

Cells live on a Cartesian lattice covering the shape's bounding box; a cell
belongs to the grid iff its center lies strictly inside the container.
Fields store one value per interior cell, in a fixed flat ordering
(lattice row-major restricted to the mask), so every solver kernel works on
contiguous 1D arrays.

Grids and fields are immutable by convention after construction and safe to
share across concurrent readers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ResolutionError
from .geometry import DomainSpec

# Relative support threshold: cells with values above eps_supp * max(f) count
# as support of a source field (floating-point zero detection).
SUPPORT_REL_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Grid:
    domain: DomainSpec
    h: float
    origin: np.ndarray            # lower corner of the lattice bounding box
    extents: tuple                # lattice cells per axis
    interior_mask: np.ndarray     # bool, lattice shape
    near_boundary_mask: np.ndarray
    centers: np.ndarray           # (n_cells, N) coordinates of interior cells
    lattice_index: np.ndarray     # (n_cells, N) integer lattice coordinates
    index_map: np.ndarray         # lattice -> flat cell index, -1 outside
    boundary_distance: np.ndarray  # distance from each cell center to the wall
    _edge_cache: dict = field(default_factory=dict, repr=False)

    @property
    def ndim(self):
        return self.domain.dimension

    @property
    def n_cells(self):
        return len(self.centers)

    @property
    def cell_volume(self):
        return self.h**self.ndim

    def integrate(self, values):
        return float(np.sum(values) * self.cell_volume)

    def nearest_cell(self, point):
        """Flat index of the interior cell whose center is nearest to ``point``."""
        d2 = ((self.centers - np.asarray(point, dtype=float)) ** 2).sum(axis=1)
        return int(np.argmin(d2))

    def edge_table(self, stencil="knight", scales=True):
        """Difference-constraint edges between interior cells.

        Returns (i, j, dist) arrays; each undirected edge appears once.  The
        ``knight`` stencil uses offsets up to (2,1) in 2D, which bounds the
        direction-quantization overshoot of the discrete Lipschitz ball at
        ~2.8% (sec of half the largest angular gap).  In 1D consecutive cells
        suffice: chained unit edges already give the exact metric constraint.

        With ``scales`` the table adds power-of-two offsets along lattice
        lines.  In a convex container these constraints are implied by the
        unit chains (every intermediate center is inside), so the feasible
        set is unchanged; they exist purely to give the projection solver
        long-range transport channels, turning its diffusive equilibration
        across wide cones into a logarithmic one.
        """
        key = (stencil, bool(scales))
        if key in self._edge_cache:
            return self._edge_cache[key]
        if self.ndim == 1:
            offsets = [((1,), 1)]
            if scales:
                k = 2
                while k < self.interior_mask.shape[0]:
                    offsets.append(((k,), max(1, k // 2)))
                    k *= 2
        else:
            if stencil == "axis":
                base = [(1, 0), (0, 1)]
            elif stencil == "diag":
                base = [(1, 0), (0, 1), (1, 1), (1, -1)]
            elif stencil == "knight":
                base = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]
            else:
                raise DataError(f"unknown stencil {stencil!r}")
            offsets = [(o, 1) for o in base]
            if scales:
                k = 4
                while k < max(self.interior_mask.shape):
                    stride = k // 2
                    offsets += [
                        ((k, 0), stride), ((0, k), stride), ((k, k), stride), ((k, -k), stride),
                    ]
                    k *= 2
        ii, jj, dd = [], [], []
        shape = self.interior_mask.shape
        for off, stride in offsets:
            src = [slice(None)] * self.ndim
            dst = [slice(None)] * self.ndim
            for ax, o in enumerate(off):
                if o >= 0:
                    src[ax] = slice(0, shape[ax] - o, stride)
                    dst[ax] = slice(o, shape[ax], stride)
                else:
                    src[ax] = slice(-o, shape[ax], stride)
                    dst[ax] = slice(0, shape[ax] + o, stride)
            a = self.index_map[tuple(src)].ravel()
            b = self.index_map[tuple(dst)].ravel()
            ok = (a >= 0) & (b >= 0)
            ii.append(a[ok])
            jj.append(b[ok])
            dd.append(np.full(ok.sum(), self.h * math.sqrt(sum(o * o for o in off))))
        table = (
            np.concatenate(ii).astype(np.int64),
            np.concatenate(jj).astype(np.int64),
            np.concatenate(dd),
        )
        self._edge_cache[key] = table
        return table

    def forward_gradient(self, values):
        """Per-cell one-sided difference gradient, (n_cells, N).

        Forward difference per axis, backward at mask edges, zero where the
        cell has no neighbor along the axis.  Used for diagnostics (weak
        residuals, complementarity), not for the admissible-set constraint.
        """
        return self._one_sided(values, centered=False)

    def centered_gradient(self, values):
        """Central differences with one-sided fallback at mask edges."""
        return self._one_sided(values, centered=True)

    def _one_sided(self, values, centered):
        n = self.n_cells
        out = np.zeros((n, self.ndim))
        for ax in range(self.ndim):
            plus = self._axis_neighbor(ax, +1)
            minus = self._axis_neighbor(ax, -1)
            has_p = plus >= 0
            has_m = minus >= 0
            vp = np.where(has_p, values[np.where(has_p, plus, 0)], values)
            vm = np.where(has_m, values[np.where(has_m, minus, 0)], values)
            if centered:
                span = (has_p.astype(float) + has_m.astype(float)) * self.h
                with np.errstate(invalid="ignore", divide="ignore"):
                    g = np.where(span > 0, (vp - vm) / np.where(span > 0, span, 1.0), 0.0)
            else:
                g = np.where(
                    has_p, (vp - values) / self.h, np.where(has_m, (values - vm) / self.h, 0.0)
                )
            out[:, ax] = g
        return out

    def _axis_neighbor(self, ax, step):
        key = ("nb", ax, step)
        if key in self._edge_cache:
            return self._edge_cache[key]
        idx = self.lattice_index.copy()
        idx[:, ax] += step
        valid = (idx[:, ax] >= 0) & (idx[:, ax] < self.interior_mask.shape[ax])
        nb = np.full(self.n_cells, -1, dtype=np.int64)
        nb[valid] = self.index_map[tuple(idx[valid].T)]
        self._edge_cache[key] = nb
        return nb


@dataclass(eq=False)
class ScalarField:
    """A scalar quantity sampled at interior cell centers.

    ``meta`` carries provenance needed by downstream consumers (e.g. the
    boundary data a profile was built from); it never affects equality of
    the numeric content.
    """

    grid: Grid
    values: np.ndarray
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_cells,):
            raise DataError(
                f"field {self.name!r}: expected {self.grid.n_cells} values, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"field {self.name!r} contains non-finite values")
        if self.name in ("source", "rolling-layer") and np.any(self.values < 0):
            raise DataError(f"field {self.name!r} must be nonnegative")

    def copy(self, name=None):
        return ScalarField(self.grid, self.values.copy(), self.name if name is None else name)

    def integral(self):
        return self.grid.integrate(self.values)

    def sup(self):
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0

    def support_mask(self, threshold=None):
        vmax = float(self.values.max(initial=0.0))
        if threshold is None:
            threshold = SUPPORT_REL_EPS * vmax
        return self.values > threshold

    def to_dense(self, fill=np.nan):
        dense = np.full(self.grid.interior_mask.shape, fill)
        dense[tuple(self.grid.lattice_index.T)] = self.values
        return dense


def build_grid(domain: DomainSpec, h: float) -> Grid:
    """Lay a cell-centered lattice over the container's bounding box.

    Deterministic for equal inputs.  Requires 0 < h < diam/4 so the mask has
    a usable interior.
    """
    shape = domain.shape
    diam = shape.diameter()
    # Inclusive upper bound: four cells across the diameter is the coarsest
    # usable resolution.
    if not (0 < h <= diam / 4 * (1 + 1e-12)):
        raise ResolutionError(f"spacing h={h} outside (0, diam/4] for diam={diam}")
    lo, hi = shape.bounding_box()
    extents = tuple(int(math.ceil((hi[a] - lo[a]) / h - 1e-12)) for a in range(domain.dimension))
    axes = [lo[a] + (np.arange(extents[a]) + 0.5) * h for a in range(domain.dimension)]
    if domain.dimension == 1:
        centers_all = axes[0][:, None]
        lattice = np.arange(extents[0])[:, None]
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        centers_all = np.stack([gx.ravel(), gy.ravel()], axis=1)
        li, lj = np.meshgrid(np.arange(extents[0]), np.arange(extents[1]), indexing="ij")
        lattice = np.stack([li.ravel(), lj.ravel()], axis=1)
    inside = shape.contains(centers_all)
    if not np.any(inside):
        raise ResolutionError("no cell center falls inside the container")
    mask = np.zeros(extents, dtype=bool)
    mask[tuple(lattice[inside].T)] = True
    centers = centers_all[inside]
    lattice_index = lattice[inside]
    index_map = np.full(extents, -1, dtype=np.int64)
    index_map[tuple(lattice_index.T)] = np.arange(inside.sum())
    bdist = shape.boundary_distance(centers)
    near = np.zeros(extents, dtype=bool)
    near[tuple(lattice_index[bdist <= h].T)] = True
    return Grid(
        domain=domain,
        h=h,
        origin=np.asarray(lo, dtype=float),
        extents=extents,
        interior_mask=mask,
        near_boundary_mask=near,
        centers=centers,
        lattice_index=lattice_index,
        index_map=index_map,
        boundary_distance=bdist,
    )


def discretize_source(domain: DomainSpec, grid: Grid, f_fn) -> ScalarField:
    """Sample a pointwise source density at cell centers."""
    vals = np.array([float(f_fn(p)) for p in grid.centers])
    if np.any(vals < 0):
        raise DataError("source density is negative at a cell center")
    return ScalarField(grid, vals, name="source")
