"""Finite-time-convergence criteria and equilibrium classification.

Whether the pile reaches the maximal profile in finite time is governed by
how much source mass sits near the ridge set: the module evaluates the
ball-integral criterion and the lower-density surrogate around ridge points,
searches for a uniform-density certificate with its explicit time bound, and
classifies the stationary profiles between the asymptotic and the maximal
one.

All estimates over finite grids are labelled estimates: the vanishing-radius
limits are extrapolated, never claimed exact.  Pure functions; per-point
evaluations may run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .grid import Grid, ScalarField

# Volume of the unit ball in N dimensions, N in {1, 2}.
_UNIT_BALL_VOLUME = {1: 2.0, 2: math.pi}


@dataclass
class ConvergenceReport:
    J_subset_spt_f: bool
    dens_value: float                     # sup over ridge points; inf marker allowed
    dens2_estimates: dict                 # per-point density estimates at the exponent
    dens2_alpha: float
    fintime_hypothesis: tuple | None      # (r, eps) when found
    tau_bound: float | None
    radial_tau: float | None = None       # extinction-time integral for radial cases
    unique_u: bool | None = None
    notes: list = field(default_factory=list)

    def to_json_dict(self):
        def enc(x):
            if x is None:
                return None
            if isinstance(x, float) and math.isinf(x):
                return {"infinite": True}
            return x

        return {
            "J_subset_spt_f": bool(self.J_subset_spt_f),
            "dens_value": enc(self.dens_value),
            "dens2_alpha": self.dens2_alpha,
            "dens2_estimates": {k: enc(v) for k, v in self.dens2_estimates.items()},
            "fintime_hypothesis": (
                None
                if self.fintime_hypothesis is None
                else {"r": self.fintime_hypothesis[0], "eps": self.fintime_hypothesis[1]}
            ),
            "tau_bound": enc(self.tau_bound),
            "radial_tau": enc(self.radial_tau),
            "unique_u": self.unique_u,
            "notes": list(self.notes),
        }


def check_support_inclusion(ridge_points, f_field: ScalarField) -> bool:
    """Is every ridge point within one cell layer of the source support?"""
    ridge_points = np.atleast_2d(np.asarray(ridge_points, dtype=float))
    if len(ridge_points) == 0:
        return False
    grid = f_field.grid
    support = f_field.support_mask()
    if not np.any(support):
        return False
    sup_pts = grid.centers[support]
    for y in ridge_points:
        gap = np.min(np.linalg.norm(sup_pts - y, axis=1))
        if gap > grid.h * (1.0 + math.sqrt(grid.ndim)) + 1e-12:
            return False
    return True


def _ball_mass(f_field: ScalarField, y, radius):
    grid = f_field.grid
    inside = np.linalg.norm(grid.centers - np.asarray(y, dtype=float), axis=1) <= radius
    return float(f_field.values[inside].sum() * grid.cell_volume)


def dens_integral(f_field: ScalarField, y, upper=None, n_nodes=64):
    """Quadrature of |B_rho| / (source mass in B_rho(y) clipped to the
    container) over rho, log-spaced from grid scale to the upper limit.

    The sub-grid head is modelled by a power fit of the resolved mass; a
    vanishing resolved mass or a non-integrable fitted growth yields the
    infinity marker.
    """
    grid = f_field.grid
    y = np.asarray(y, dtype=float).reshape(grid.ndim)
    shape = grid.domain.shape
    diam = shape.diameter()
    if upper is None:
        bd = float(shape.boundary_distance(y[None, :])[0])
        upper = min(1.0, 0.9 * max(bd, 0.0) + 0.9 * diam)
    N = grid.ndim
    omega = _UNIT_BALL_VOLUME[N]
    rho_min = 2.0 * grid.h
    if upper <= rho_min:
        return math.inf
    rhos = np.geomspace(rho_min, upper, n_nodes)
    masses = np.array([_ball_mass(f_field, y, rho) for rho in rhos])
    if np.any(masses <= 0):
        return math.inf
    integrand = omega * rhos**N / masses
    tail = float(np.trapezoid(integrand, rhos))
    # Head [0, rho_min]: fit mass ~ c rho^q on the smallest resolved decade.
    k = max(2, n_nodes // 8)
    q = float(np.polyfit(np.log(rhos[:k]), np.log(masses[:k]), 1)[0])
    if N - q <= -1.0 + 1e-9:
        return math.inf
    c = masses[0] / rhos[0] ** q
    head = omega * rho_min ** (N - q + 1) / (c * (N - q + 1))
    return head + tail


def dens2_density(f_field: ScalarField, y, alpha, r_grid=None):
    """Estimated lower density of the source at y with exponent N + alpha.

    Infimum of r^-(N+alpha) * mass(B_r(y)) over a log-spaced r grid from 2h
    to a fifth of the diameter; the vanishing-radius liminf is extrapolated,
    so this is an estimate, not the true liminf.
    """
    grid = f_field.grid
    if not 0 <= alpha < 1:
        raise DataError("density exponent offset must be in [0, 1)")
    y = np.asarray(y, dtype=float).reshape(grid.ndim)
    if r_grid is None:
        r_grid = np.geomspace(2.0 * grid.h, 0.2 * grid.domain.shape.diameter(), 32)
    vals = [
        _ball_mass(f_field, y, rr) / rr ** (grid.ndim + alpha) for rr in r_grid
    ]
    return float(np.min(vals))


def finite_time_bound(r, eps, N, min_phi, diam):
    """Explicit saturation-time bound from a uniform source floor eps on
    radius-r neighborhoods of the ridge."""
    if not 0 < eps <= r:
        raise DataError("need 0 < eps <= r")
    return ((min_phi + diam) ** (N + 1) + N * r ** (N + 1)) / ((N + 1) * eps * r**N)


def fintime_hypothesis_and_bound(f_field: ScalarField, ridge_points, boundary, domain):
    """Search radii for a uniform source floor around the ridge set.

    For each trial radius r, the largest admissible floor is eps =
    min(r, min of f over the cells within r of the ridge); each valid pair
    gives the explicit bound, and the smallest bound wins.  Returns
    (r, eps, tau) or None.
    """
    ridge_points = np.atleast_2d(np.asarray(ridge_points, dtype=float))
    if len(ridge_points) == 0:
        return None
    grid = f_field.grid
    diam = domain.shape.diameter()
    min_phi = float(np.min(boundary.phi))
    N = grid.ndim
    best = None
    r_values = np.geomspace(2.0 * grid.h, diam / 3.0, 12)
    gap = np.min(
        np.linalg.norm(grid.centers[:, None, :] - ridge_points[None, :, :], axis=2), axis=1
    )
    for r in r_values:
        cells = gap <= r
        if not np.any(cells):
            continue
        floor = float(f_field.values[cells].min())
        if floor <= 0:
            continue
        eps = min(floor, r)
        tau = finite_time_bound(r, eps, N, min_phi, diam)
        if best is None or tau < best[2]:
            best = (float(r), float(eps), float(tau))
    return best


def classify_equilibria(grid: Grid, boundary, f_field: ScalarField, source_fn=None,
                        test_count=6, seed=0):
    """Equilibrium family: asymptotic and maximal profiles, uniqueness flag,
    and a sample intermediate stationary profile with its weak residual.

    With a zero source the classification degenerates: any admissible
    profile with no rolling layer and no discharge is stationary.
    """
    from . import eikonal as eik
    from . import transport as tr

    u_phi = eik.lax_hopf(grid, boundary)
    rays = eik.transport_rays(grid, boundary, u_phi)
    result = {
        "u_phi": u_phi,
        "rays": rays,
        "degenerate": False,
    }
    if not np.any(f_field.support_mask()):
        result["degenerate"] = True
        result["note"] = (
            "zero source: every admissible profile with zero rolling layer "
            "and zero discharge is stationary"
        )
        return result
    u_f = eik.u_f_profile(f_field, u_phi, grid, source_fn=source_fn)
    unique_u = check_support_inclusion(rays.ridge_points, f_field)
    gamma = eik.discharge_boundary(f_field, boundary, u_phi)
    v_f = tr.stationary_rolling_layer(f_field, u_phi, rays, source_fn=source_fn)
    nu = tr.boundary_discharge_stationary(f_field, rays, gamma)

    c = 0.5 * (float(u_phi.values.max()) - float(u_f.values.max()))
    inter = np.maximum(u_f.values, np.minimum(u_phi.values, u_f.values + c))
    intermediate = ScalarField(grid, inter, name="intermediate")

    gamma_pts = boundary.points[gamma.mask]
    fns = tr.make_test_functions(grid, test_count, seed=seed,
                                 avoid_points=gamma_pts, margin=2 * grid.h)
    wr_max = tr.weak_residual(u_phi, v_f, nu, f_field, fns)
    wr_mid = tr.weak_residual(intermediate, v_f, nu, f_field, fns)
    wr_uf = tr.weak_residual(u_f, v_f, nu, f_field, fns)

    result.update(
        u_f=u_f,
        v_f=v_f,
        nu=nu,
        gamma_f=gamma,
        unique_u=unique_u,
        intermediate=intermediate,
        intermediate_offset=c,
        weak_residual_u_phi=wr_max,
        weak_residual_intermediate=wr_mid,
        weak_residual_u_f=wr_uf,
    )
    return result
