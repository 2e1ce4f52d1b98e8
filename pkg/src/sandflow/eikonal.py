"""Maximal profile, projections, transport rays, and the asymptotic profile.

The maximal admissible profile is the min-envelope of cones rooted at the
boundary samples (wall height plus distance).  Transport rays are the maximal
segments along which that envelope grows at unit rate; their final points
form the ridge set J, and the boundary points reached by projecting the
source support form the discharge boundary.

All operations here are pure functions of immutable inputs; the per-cell
loops are data-parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError
from .geometry import BoundaryData
from .grid import Grid, ScalarField

# Argmin / segment identities hold up to first-order consistency of the
# discrete metric, hence tolerances proportional to the spacing.
PROJ_TOL_FACTOR = 2.0   # tol_pi = 2 h
RAY_TOL_FACTOR = 2.0    # tol_ray = 2 h


@dataclass(eq=False)
class RaySet:
    """Maximal transport rays plus the ridge set and a per-cell assignment."""

    initial: np.ndarray        # (R, N) boundary points
    final: np.ndarray          # (R, N)
    length: np.ndarray         # (R,)
    sample_index: np.ndarray   # (R,) index into the boundary samples
    ridge_points: np.ndarray   # (K, N) final points of the rays (set J)
    ridge_mask: np.ndarray     # per-cell bool
    cell_ray: np.ndarray       # per-cell ray index, -1 if none
    grid: Grid
    boundary: BoundaryData

    @property
    def n_rays(self):
        return len(self.length)


@dataclass(eq=False)
class DischargeBoundary:
    """Mask over boundary samples receiving sand from the source support."""

    mask: np.ndarray
    boundary: BoundaryData

    def indices(self):
        return np.nonzero(self.mask)[0]


def boundary_envelope(points, boundary: BoundaryData):
    """Exact min over boundary samples of (wall height + distance).

    Valid at arbitrary points, on or off the grid; the grid never enters.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return kernels.cone_envelope(pts, boundary.points, boundary.phi)


def lax_hopf(grid: Grid, boundary: BoundaryData) -> ScalarField:
    """Maximal admissible profile on the grid.

    Pointwise min over boundary samples of wall height plus distance; exact
    up to boundary sampling, 1-Lipschitz by construction.
    """
    if boundary.m == 0:
        raise DataError("empty boundary sample set")
    vals = boundary_envelope(grid.centers, boundary)
    return ScalarField(grid, vals, name="u_phi", meta={"boundary": boundary})


def projections(x, boundary: BoundaryData, u_phi: ScalarField):
    """Indices of boundary samples realizing the envelope at x, within 2h."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    vals = boundary.phi + np.linalg.norm(boundary.points - x, axis=1)
    tol = PROJ_TOL_FACTOR * u_phi.grid.h
    return np.nonzero(vals <= vals.min() + tol)[0]


def _sample_values_at(points, boundary, sample_idx):
    y = boundary.points[sample_idx]
    return boundary.phi[sample_idx] + np.linalg.norm(points - y, axis=1)


def _probe_slack(grid, boundary, cells):
    """Tolerance for the ray-prolongation probe.

    Two error sources: first-order consistency of the discrete metric (h^2)
    and the boundary-sampling error of the envelope, which behaves like
    spacing^2 / distance-to-wall and matters only for cells hugging the wall.
    """
    h = grid.h
    base = max(h * h, 1e-9 * grid.domain.shape.diameter())
    if grid.ndim == 1:
        return np.full(len(cells), base)
    # Chord-vs-arc error of the sampled envelope: ~ arc^2 / (8 d) at wall
    # distance d, never more than arc / 2.
    arc = float(boundary.arc_weight.max())
    d = np.maximum(grid.boundary_distance[cells], 1e-300)
    return base + np.minimum(0.5 * arc, arc * arc / (8.0 * d))


def _extension_ok(grid, boundary, cells, directions, base, slack):
    """Does the envelope keep growing at unit rate beyond each cell?

    Probes one spacing past the cell center along the given unit direction
    (clipped at the wall); a cell whose probe cannot advance half a spacing
    inside the container counts as non-extendable along that direction.
    """
    h = grid.h
    shape = grid.domain.shape
    x = grid.centers[cells]
    t_exit = shape.ray_exit_many(x, directions)
    delta = np.minimum(h, t_exit)
    ok_room = delta >= 0.5 * h
    probe = x + delta[:, None] * directions
    env = kernels.cone_envelope(probe, boundary.points, boundary.phi)
    return ok_room & (env >= base + delta - slack)


def _ray_directions(grid, boundary, cells, cand_idx):
    x = grid.centers[cells]
    seg = x - boundary.points[cand_idx]
    length = np.maximum(np.linalg.norm(seg, axis=1), 1e-300)
    return seg / length[:, None]


def _inward_normals(grid, cells):
    """Unit direction of steepest increase of the wall distance."""
    shape = grid.domain.shape
    x = grid.centers[cells]
    step = 0.05 * grid.h
    g = np.zeros_like(x)
    for ax in range(grid.ndim):
        e = np.zeros(grid.ndim)
        e[ax] = step
        g[:, ax] = shape.boundary_distance(x + e) - shape.boundary_distance(x - e)
    norm = np.maximum(np.linalg.norm(g, axis=1), 1e-300)
    return g / norm[:, None]


def transport_rays(grid: Grid, boundary: BoundaryData, u_phi: ScalarField) -> RaySet:
    """Maximal rays, ridge set, and per-cell ray assignment.

    Ridge detection probes the exact envelope beyond each cell along its
    near-optimal ray directions instead of comparing neighbor cells: the
    probe point is off-lattice, so no direction quantization enters, and the
    detected set agrees with exhaustive segment-maximality checks to within
    one cell layer.
    """
    h = grid.h
    tol_ray = RAY_TOL_FACTOR * h
    n = grid.n_cells
    minval = u_phi.values

    # Pass 1: probe along the single best sample direction of every cell.
    best = np.empty(n, dtype=np.int64)
    for i0 in range(0, n, 4096):
        sl = slice(i0, min(i0 + 4096, n))
        d = np.linalg.norm(
            grid.centers[sl, None, :] - boundary.points[None, :, :], axis=2
        ) + boundary.phi[None, :]
        best[sl] = np.argmin(d, axis=1)
    all_cells = np.arange(n)
    extendable = _extension_ok(
        grid, boundary, all_cells, _ray_directions(grid, boundary, all_cells, best),
        minval, _probe_slack(grid, boundary, all_cells),
    )

    # Pass 2: unresolved cells try all near-optimal sample directions plus
    # the inward normal (wall-hugging cells have poorly resolved Pi sets).
    pending = np.nonzero(~extendable)[0]
    pair_cells, pair_cands = [], []
    for c in pending:
        vals = boundary.phi + np.linalg.norm(boundary.points - grid.centers[c], axis=1)
        cand = np.nonzero(vals <= minval[c] + tol_ray)[0]
        cand = cand[cand != best[c]]
        pair_cells.append(np.full(len(cand), c))
        pair_cands.append(cand)
    if pending.size:
        pc = np.concatenate(pair_cells).astype(np.int64)
        pk = np.concatenate(pair_cands).astype(np.int64)
        if len(pc):
            ok = _extension_ok(
                grid, boundary, pc, _ray_directions(grid, boundary, pc, pk),
                minval[pc], _probe_slack(grid, boundary, pc),
            )
            extendable[np.unique(pc[ok])] = True
        still = pending[~extendable[pending]]
        if still.size:
            ok = _extension_ok(
                grid, boundary, still, _inward_normals(grid, still),
                minval[still], _probe_slack(grid, boundary, still),
            )
            extendable[still[ok]] = True

    ridge_mask = ~extendable
    ridge_cells = np.nonzero(ridge_mask)[0]
    ridge_points = grid.centers[ridge_cells]

    # Rays: each boundary sample pairs with the ridge cells most consistent
    # with unit growth from it (smallest excess over the envelope) and ends
    # at their centroid.  The centroid collapses the lattice scatter of the
    # ridge cluster, which would otherwise be of order h and dominate the
    # spacing of neighboring rays mid-domain.
    rays_y, rays_x, rays_len, rays_s = [], [], [], []
    if len(ridge_cells):
        ridge_minval = minval[ridge_cells]
        for s in range(boundary.m):
            lengths = np.linalg.norm(ridge_points - boundary.points[s], axis=1)
            excess = boundary.phi[s] + lengths - ridge_minval
            emin = float(excess.min())
            if emin > tol_ray:
                continue
            endpoint = ridge_points[excess <= emin + 0.25 * h].mean(axis=0)
            rays_y.append(boundary.points[s])
            rays_x.append(endpoint)
            rays_len.append(float(np.linalg.norm(endpoint - boundary.points[s])))
            rays_s.append(s)
    initial = np.asarray(rays_y, dtype=float).reshape(-1, grid.ndim)
    final = np.asarray(rays_x, dtype=float).reshape(-1, grid.ndim)
    length = np.asarray(rays_len, dtype=float)
    sample_index = np.asarray(rays_s, dtype=np.int64)

    # Containment pruning uses a tight geometric tolerance: distinct boundary
    # points give distinct rays unless one truly lies along the other (a
    # boundary-grazing ray), so only near-exact containment is redundant.
    arc = float(boundary.arc_weight.max()) if grid.ndim == 2 else h
    tol_contain = max(1e-9 * grid.domain.shape.diameter(), 0.25 * min(arc, h))
    keep = _maximality_filter(initial, final, length, tol_contain)
    initial, final, length, sample_index = (
        initial[keep], final[keep], length[keep], sample_index[keep],
    )

    cell_ray = _assign_cells(grid, boundary, minval, initial, final, length, sample_index)
    return RaySet(
        initial=initial,
        final=final,
        length=length,
        sample_index=sample_index,
        ridge_points=ridge_points,
        ridge_mask=ridge_mask,
        cell_ray=cell_ray,
        grid=grid,
        boundary=boundary,
    )


def _maximality_filter(initial, final, length, tol):
    """Drop rays that are sub-segments of a longer stored ray."""
    nrays = len(length)
    keep = np.ones(nrays, dtype=bool)
    order = np.argsort(-length)
    for a_pos in range(nrays):
        a = order[a_pos]
        if not keep[a]:
            continue
        for b_pos in range(a_pos + 1, nrays):
            b = order[b_pos]
            if not keep[b] or length[b] >= length[a] - tol:
                continue
            # Proper sub-segment: same initial point and both endpoints on
            # the longer ray (nearby parallel rays are not sub-segments).
            if float(np.linalg.norm(initial[b] - initial[a])) > tol:
                continue
            dy = _point_segment_distance(initial[b], initial[a], final[a])
            dx = _point_segment_distance(final[b], initial[a], final[a])
            if dy <= tol and dx <= tol:
                keep[b] = False
    return keep


def _point_segment_distance(p, a, b):
    seg = b - a
    denom = float(seg @ seg)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = np.clip(float((p - a) @ seg) / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * seg)))


def _assign_cells(grid, boundary, minval, initial, final, length, sample_index):
    """Per-cell ray index: nearest covering ray, lexicographically smallest
    initial point first (deterministic tie-break)."""
    n = grid.n_cells
    cell_ray = np.full(n, -1, dtype=np.int64)
    if len(length) == 0:
        return cell_ray
    tol_pi = PROJ_TOL_FACTOR * grid.h
    cover = 0.75 * grid.h
    order = np.lexsort(tuple(initial[:, a] for a in reversed(range(grid.ndim))))
    for r in order:
        unset = cell_ray < 0
        if not np.any(unset):
            break
        idx = np.nonzero(unset)[0]
        pts = grid.centers[idx]
        vals = boundary.phi[sample_index[r]] + np.linalg.norm(pts - initial[r], axis=1)
        near = _points_segment_distance(pts, initial[r], final[r]) <= cover
        ok = near & (vals <= minval[idx] + tol_pi)
        cell_ray[idx[ok]] = r
    return cell_ray


def _points_segment_distance(pts, a, b):
    seg = b - a
    denom = float(seg @ seg)
    if denom == 0.0:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ seg / denom, 0.0, 1.0)
    proj = a + t[:, None] * seg
    return np.linalg.norm(pts - proj, axis=1)


def discharge_boundary(f_field: ScalarField, boundary: BoundaryData, u_phi: ScalarField) -> DischargeBoundary:
    """Boundary samples that are projections of some source-support cell."""
    if np.any(f_field.values < 0):
        raise DataError("source field must be nonnegative")
    grid = f_field.grid
    support = f_field.support_mask()
    mask = np.zeros(boundary.m, dtype=bool)
    if not np.any(support):
        return DischargeBoundary(mask=mask, boundary=boundary)
    pts = grid.centers[support]
    mv = u_phi.values[support]
    tol = PROJ_TOL_FACTOR * grid.h
    for s in range(boundary.m):
        vals = boundary.phi[s] + np.linalg.norm(pts - boundary.points[s], axis=1)
        if np.any(vals <= mv + tol):
            mask[s] = True
    return DischargeBoundary(mask=mask, boundary=boundary)


def u_f_profile(f_field: ScalarField, u_phi: ScalarField, grid: Grid,
                source_fn=None, supersample=10) -> ScalarField:
    """Asymptotic profile: largest 1-Lipschitz cone envelope pinned to the
    maximal profile on the source support, clipped at zero.

    With an analytic source the support is densified (supersampled) so the
    support boundary is located below cell resolution.
    """
    support = f_field.support_mask()
    if not np.any(support):
        raise DataError("asymptotic profile undefined for zero source")
    sites = grid.centers[support]
    site_vals = u_phi.values[support]
    if source_fn is not None and supersample > 1:
        bnd = u_phi.meta.get("boundary")
        if bnd is None:
            raise DataError("supersampling needs a profile built by lax_hopf (boundary metadata)")
        extra = _supersampled_support(grid, support, source_fn, supersample)
        if len(extra):
            extra_vals = boundary_envelope(extra, bnd)
            sites = np.vstack([sites, extra])
            site_vals = np.concatenate([site_vals, extra_vals])
    vals = -kernels.cone_envelope(grid.centers, sites, -site_vals)
    return ScalarField(grid, np.maximum(vals, 0.0), name="u_f")


def _supersampled_support(grid, support, source_fn, factor):
    """Sub-cell sample points with positive source density.

    1D refines every support cell; 2D refines only support cells on the edge
    of the support mask or near the wall (interior refinement adds nothing
    for a Lipschitz envelope).
    """
    h = grid.h
    if grid.ndim == 1:
        cells = np.nonzero(support)[0]
        offs = (np.arange(factor) + 0.5) / factor - 0.5
        pts = (grid.centers[cells][:, None, 0] + offs[None, :] * h).reshape(-1, 1)
    else:
        edge = _support_edge_cells(grid, support)
        if not np.any(edge):
            return np.empty((0, grid.ndim))
        offs = (np.arange(factor) + 0.5) / factor - 0.5
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        duo = np.stack([ox.ravel(), oy.ravel()], axis=1) * h
        pts = (grid.centers[edge][:, None, :] + duo[None, :, :]).reshape(-1, 2)
        pts = pts[grid.domain.shape.contains(pts)]
    dens = np.array([float(source_fn(p)) for p in pts])
    return pts[dens > 0]


def _support_edge_cells(grid, support):
    """Support cells with a non-support (or missing) axis neighbor."""
    edge = np.zeros(grid.n_cells, dtype=bool)
    for ax in range(grid.ndim):
        for step in (-1, 1):
            nb = grid._axis_neighbor(ax, step)
            missing = nb < 0
            nonsupport = ~missing & ~support[np.where(missing, 0, nb)]
            edge |= support & (missing | nonsupport)
    return edge
