"""Rolling layer and boundary discharge.

At equilibrium every poured grain travels along a transport ray to the wall.
The rolling-layer thickness is therefore a flux: on each ray, the mass
poured upstream of a point divided by the local ray-tube width; the width is
measured from the actual spacing of neighboring rays (constant for straight
parallel families, linearly narrowing toward shared final points).  The
boundary discharge collects every cell's mass at its projected boundary
sample, so the measure is supported on the discharge boundary and conserves
the total exactly.

Ray integrations are independent per ray; all inputs immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eikonal import PROJ_TOL_FACTOR, DischargeBoundary, RaySet
from .errors import DataError
from .grid import Grid, ScalarField


@dataclass(eq=False)
class BoundaryMeasure:
    """Nonnegative atoms at the boundary samples."""

    weights: np.ndarray
    boundary: object

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise DataError("boundary measure must be nonnegative")

    def total(self):
        return float(self.weights.sum())


@dataclass(eq=False)
class RollingLayer:
    field: ScalarField

    def __post_init__(self):
        if np.any(self.field.values < -1e-15):
            raise DataError("rolling layer must be nonnegative")


def _field_lookup(grid: Grid, f_values):
    """Nearest-cell evaluation of a grid field at arbitrary points."""
    shape = grid.interior_mask.shape

    def lookup(points):
        pts = np.atleast_2d(points)
        idx = np.floor((pts - grid.origin) / grid.h).astype(np.int64)
        for a in range(grid.ndim):
            idx[:, a] = np.clip(idx[:, a], 0, shape[a] - 1)
        flat = grid.index_map[tuple(idx.T)]
        out = np.zeros(len(pts))
        ok = flat >= 0
        out[ok] = f_values[flat[ok]]
        if np.any(~ok):
            # fall back to the nearest masked neighbor on the lattice
            for w in np.nonzero(~ok)[0]:
                best = None
                for off in np.ndindex(*(3,) * grid.ndim):
                    probe = idx[w] + np.array(off) - 1
                    if np.any(probe < 0) or np.any(probe >= shape):
                        continue
                    cand = grid.index_map[tuple(probe)]
                    if cand >= 0:
                        best = cand
                        break
                out[w] = f_values[best] if best is not None else 0.0
        return out

    return lookup


def _ray_widths(rays: RaySet, thetas):
    """Tube width per ray at the given fractions, from neighbor spacing.

    Neighbors are the rays of the adjacent boundary samples (cyclic in 2D);
    the spacing is measured perpendicular to the ray, so endpoint jitter
    along the ray (ridge-cell quantization) does not inflate the tube.  In
    1D rays carry unit cross-section.
    """
    grid = rays.grid
    n_rays = rays.n_rays
    K = len(thetas)
    if grid.ndim == 1:
        return np.ones((n_rays, K))
    order = np.argsort(rays.sample_index)
    widths = np.full((n_rays, K), np.nan)
    pos = rays.initial[:, None, :] + thetas[None, :, None] * (
        rays.final - rays.initial
    )[:, None, :]
    direction = rays.final - rays.initial
    direction = direction / np.maximum(np.linalg.norm(direction, axis=1), 1e-300)[:, None]
    normal = np.stack([-direction[:, 1], direction[:, 0]], axis=1)
    for a_pos, r in enumerate(order):
        left = order[a_pos - 1]
        right = order[(a_pos + 1) % len(order)]
        w = 0.0
        cnt = 0
        for nb in (left, right):
            if nb == r:
                continue
            w = w + np.abs((pos[r] - pos[nb]) @ normal[r])
            cnt += 1
        widths[r] = w / max(cnt, 1) if cnt else rays.boundary.arc_weight[rays.sample_index[r]]
    return widths


def stationary_rolling_layer(f: ScalarField, u_phi: ScalarField, rays: RaySet,
                             source_fn=None) -> RollingLayer:
    """Rolling layer of the equilibrium pair: per-ray flux integration.

    v(x) = (mass poured strictly upstream of x on its ray tube) / tube width
    at x.  Cells without a ray take the average of assigned neighbors.
    """
    grid = rays.grid
    if rays.n_rays == 0:
        return RollingLayer(ScalarField(grid, np.zeros(grid.n_cells), name="rolling-layer"))
    lookup = _field_lookup(grid, np.asarray(f.values, dtype=float)) if source_fn is None else (
        lambda pts: np.array([max(float(source_fn(p)), 0.0) for p in np.atleast_2d(pts)])
    )
    K = max(16, int(np.ceil(float(rays.length.max()) / (0.5 * grid.h))) + 1)
    thetas = np.linspace(0.0, 1.0, K)
    widths = _ray_widths(rays, thetas)

    v_vals = np.zeros(grid.n_cells)
    have = np.zeros(grid.n_cells, dtype=bool)
    for r in range(rays.n_rays):
        L = rays.length[r]
        pts = rays.initial[r] + thetas[:, None] * (rays.final[r] - rays.initial[r])
        dens = lookup(pts)
        w = widths[r]
        # cumulative mass upstream (from the final point back toward the wall)
        integrand = dens * w * L
        flux = np.concatenate([
            np.cumsum((integrand[::-1][:-1] + integrand[::-1][1:]) * 0.5 * (thetas[1] - thetas[0]))[::-1],
            [0.0],
        ])
        cells = np.nonzero(rays.cell_ray == r)[0]
        if not len(cells):
            continue
        tc = np.linalg.norm(grid.centers[cells] - rays.initial[r], axis=1) / max(L, 1e-300)
        tc = np.clip(tc, 0.0, 1.0)
        fl = np.interp(tc, thetas, flux)
        wc = np.maximum(np.interp(tc, thetas, w), 1e-3 * grid.h)
        v_vals[cells] = fl / wc
        have[cells] = True

    # ridge cells and other unassigned cells: average of assigned neighbors
    v_vals = _fill_unassigned(grid, v_vals, have)
    v_vals = np.maximum(v_vals, 0.0)
    return RollingLayer(ScalarField(grid, v_vals, name="rolling-layer"))


def _fill_unassigned(grid, values, have):
    out = values.copy()
    pending = ~have
    guard = 0
    while np.any(pending) and guard < 64:
        guard += 1
        newly = []
        for c in np.nonzero(pending)[0]:
            acc, cnt = 0.0, 0
            for ax in range(grid.ndim):
                for stp in (-1, 1):
                    nb = grid._axis_neighbor(ax, stp)[c]
                    if nb >= 0 and not pending[nb]:
                        acc += out[nb]
                        cnt += 1
            if cnt:
                out[c] = acc / cnt
                newly.append(c)
        if not newly:
            break
        pending[newly] = False
    return out


def boundary_discharge_stationary(f: ScalarField, rays: RaySet,
                                  gamma_f: DischargeBoundary) -> BoundaryMeasure:
    """Deposit each cell's source mass at the boundary sample its ray starts
    from; cells without a ray use their nearest projection sample.

    Exactly conserves the total poured mass, and raises when more than 1% of
    it would land outside the discharge boundary.
    """
    grid = rays.grid
    boundary = rays.boundary
    fv = np.asarray(f.values, dtype=float)
    weights = np.zeros(boundary.m)
    mass = fv * grid.cell_volume
    sample_of_cell = np.full(grid.n_cells, -1, dtype=np.int64)
    assigned = rays.cell_ray >= 0
    sample_of_cell[assigned] = rays.sample_index[rays.cell_ray[assigned]]
    rest = np.nonzero(~assigned & (mass > 0))[0]
    for c in rest:
        vals = boundary.phi + np.linalg.norm(boundary.points - grid.centers[c], axis=1)
        sample_of_cell[c] = int(np.argmin(vals))
    contributing = mass > 0
    np.add.at(weights, sample_of_cell[contributing], mass[contributing])
    total = float(mass.sum())
    outside = float(weights[~gamma_f.mask].sum())
    if total > 0 and outside > 0.01 * total:
        raise DataError(
            f"{outside:.3e} of {total:.3e} source mass deposited outside the discharge boundary"
        )
    return BoundaryMeasure(weights=weights, boundary=boundary)


@dataclass
class TestFunction:
    """Smooth compactly supported test function with its gradient."""

    value_fn: object
    grad_fn: object
    c1_norm: float
    name: str = ""

    def value(self, points):
        return self.value_fn(np.atleast_2d(points))

    def grad(self, points):
        return self.grad_fn(np.atleast_2d(points))


def make_bump(center, radius, amplitude, name=""):
    """Classic mollifier bump: smooth, vanishing outside the given ball."""
    center = np.asarray(center, dtype=float)

    def value(pts):
        q = ((pts - center) ** 2).sum(axis=1) / radius**2
        out = np.zeros(len(pts))
        ok = q < 1.0
        out[ok] = amplitude * np.exp(1.0 - 1.0 / (1.0 - q[ok]))
        return out

    def grad(pts):
        q = ((pts - center) ** 2).sum(axis=1) / radius**2
        out = np.zeros_like(pts)
        ok = q < 1.0
        coef = np.zeros(len(pts))
        coef[ok] = amplitude * np.exp(1.0 - 1.0 / (1.0 - q[ok])) * (-2.0 / radius**2) / (1.0 - q[ok]) ** 2
        out[ok] = coef[ok, None] * (pts[ok] - center)
        return out

    # C1 norm on a dense radial sample (exact enough for reporting scale)
    rr = np.linspace(0.0, radius * (1 - 1e-9), 4001)
    q = rr**2 / radius**2
    vals = amplitude * np.exp(1.0 - 1.0 / (1.0 - q))
    grads = np.abs(vals * (-2.0 * rr / radius**2) / (1.0 - q) ** 2)
    c1 = float(np.max(vals) + np.max(grads))
    return TestFunction(value, grad, c1, name=name or f"bump@{center.round(3)}")


def make_test_functions(grid: Grid, count, seed=0, avoid_points=None, margin=0.0):
    """Seeded family of bump test functions with supports inside the domain.

    ``avoid_points``: keep each support at least ``margin`` away from these
    points (used for the variant whose tests vanish near the discharge
    boundary).
    """
    shape = grid.domain.shape
    rng = np.random.default_rng(seed)
    lo, hi = shape.bounding_box()
    out = []
    guard = 0
    while len(out) < count and guard < 10000:
        guard += 1
        c = lo + rng.random(grid.ndim) * (hi - lo)
        if not shape.contains(c[None, :])[0]:
            continue
        bd = float(shape.boundary_distance(c[None, :])[0])
        rmax = bd - margin
        if rmax < 4 * grid.h:
            continue
        radius = (0.35 + 0.55 * rng.random()) * rmax
        if avoid_points is not None and len(avoid_points):
            gap = np.min(np.linalg.norm(np.atleast_2d(avoid_points) - c, axis=1))
            if gap < radius + margin:
                continue
        amp = 0.5 + rng.random()
        out.append(make_bump(c, radius, amp, name=f"bump{len(out)}"))
    if len(out) < count:
        raise DataError("could not place the requested test functions")
    return out


@dataclass
class WeakFormReport:
    max_residual: float
    entries: list          # (name, residual, c1_norm, residual/(h*c1))
    h: float

    @property
    def constant(self):
        """max residual / (h * C1 norm) over the family."""
        return max((e[3] for e in self.entries), default=0.0)


def weak_residual(u: ScalarField, v: RollingLayer, nu, f: ScalarField, test_fns) -> WeakFormReport:
    """Residual of the stationary weak form for each test function.

    r(psi) = sum v grad_h(u).grad(psi) - sum f psi + sum psi(y) nu(y), with
    grid quadrature and centered differences for grad_h.
    """
    grid = u.grid
    gu = grid.centered_gradient(u.values)
    vv = v.field.values if isinstance(v, RollingLayer) else np.asarray(v, dtype=float)
    vol = grid.cell_volume
    entries = []
    for fn in test_fns:
        psi = fn.value(grid.centers)
        gpsi = fn.grad(grid.centers)
        bulk = float(((vv[:, None] * gu) * gpsi).sum() * vol)
        src = float((f.values * psi).sum() * vol)
        disc = 0.0
        if nu is not None:
            if not isinstance(nu, BoundaryMeasure):
                raise DataError("discharge term must be a BoundaryMeasure (or None)")
            disc = float((nu.weights * fn.value(nu.boundary.points)).sum())
        r = bulk - src + disc
        entries.append((fn.name, r, fn.c1_norm, abs(r) / (grid.h * fn.c1_norm)))
    worst = max((abs(e[1]) for e in entries), default=0.0)
    return WeakFormReport(max_residual=worst, entries=entries, h=grid.h)


def evolution_discharge(traj, f: ScalarField):
    """Per-step total discharge rate from the mass balance of the run."""
    expected = float(np.asarray(f.values).sum() * traj.grid.cell_volume)
    if abs(expected - traj.source_mass_rate) > 1e-9 * (1 + expected):
        raise DataError("trajectory was produced with a different source")
    return traj.step_times.copy(), traj.discharge_rate.copy()


def complementarity_check(u: ScalarField, v) -> float:
    """Worst product of rolling-layer thickness and subcritical slope slack."""
    grid = u.grid
    gu = grid.centered_gradient(u.values)
    slope = np.linalg.norm(gu, axis=1)
    vv = v.field.values if isinstance(v, RollingLayer) else np.asarray(v, dtype=float)
    return float(np.max(vv * np.maximum(1.0 - slope, 0.0), initial=0.0))
