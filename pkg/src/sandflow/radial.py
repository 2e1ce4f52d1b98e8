"""Closed-form and ODE reference solutions on the unit ball with zero walls.

The pile on the unit ball under a radial source grows a tent profile whose
inner valley radius rho(t) obeys a one-dimensional ODE: the valley fills at
the rate the source pours mass into it.  For power-law densities the ODE has
closed-form solutions with an explicit extinction time when the exponent is
below one; a general nondecreasing radial density is handled by adaptive
integration.  These trajectories are the ground truth the grid solver is
verified against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DataError


def t_alpha(N, alpha):
    """Time for the empty container to reach the half-height tent profile."""
    if alpha <= 0:
        raise DataError(f"power-law exponent must be positive, got {alpha}")
    if N < 1:
        raise DataError(f"dimension must be >= 1, got {N}")
    if alpha < 1e-8:
        return math.log(2.0) / (N + 1)
    return (2.0**alpha - 1.0) / ((N + 1) * alpha)


def u1_profile(r):
    """Tent profile reached at t_alpha: peak 1/2 at radius 1/2."""
    r = np.asarray(r, dtype=float)
    if np.any((r < 0) | (r > 1)):
        raise DataError("radius outside [0, 1]")
    return 0.5 - np.abs(r - 0.5)


def tau_alpha(N, alpha):
    """Extinction time of the valley radius for exponents below one."""
    if not 0 < alpha < 1:
        raise DataError("finite extinction requires 0 < alpha < 1")
    return 2.0**alpha / (N * (1.0 - alpha))


def rho_power_law(t, N, alpha):
    """Valley radius at time t for the power-law source (N+alpha) r^alpha.

    Solves d(rho)/dt = -(N/2) rho^alpha from rho(0) = 1/2: exponential decay
    at alpha = 1, extinction at tau_alpha for alpha < 1, and the positive
    branch for alpha > 1.
    """
    t = np.asarray(t, dtype=float)
    if alpha <= 0:
        raise DataError("alpha must be positive")
    if abs(alpha - 1.0) < 1e-14:
        return 0.5 * np.exp(-0.5 * N * t)
    if alpha < 1:
        core = 0.5 ** (1.0 - alpha) - 0.5 * N * (1.0 - alpha) * t
        return np.maximum(core, 0.0) ** (1.0 / (1.0 - alpha))
    return (0.5 ** (1.0 - alpha) + 0.5 * N * (alpha - 1.0) * t) ** (-1.0 / (alpha - 1.0))


def power_law_density(N, alpha):
    """Radial density of the normalized power-law source."""
    return lambda r: (N + alpha) * r**alpha


@dataclass(frozen=True, eq=False)
class RadialCase:
    """Radial benchmark: dimension, radial density, and output time grid."""

    N: int
    fbar: object              # radius -> density, continuous
    t_grid: np.ndarray

    def __post_init__(self):
        if self.N < 1:
            raise DataError("dimension must be >= 1")
        if float(self.fbar(0.0)) < 0:
            raise DataError("density must be nonnegative at zero")


@dataclass(eq=False)
class RhoTrajectory:
    times: np.ndarray
    rho: np.ndarray
    extinction_time: float | None
    _dense: object = None

    def rho_at(self, t):
        t = np.asarray(t, dtype=float)
        if self._dense is not None:
            tmax = self.times[-1]
            out = np.empty(t.shape)
            flat_t = np.atleast_1d(t)
            flat = np.atleast_1d(out)
            inside = flat_t <= tmax
            if np.any(inside):
                flat[inside] = np.clip(self._dense(flat_t[inside]).reshape(-1), 0.0, 0.5)
            flat[~inside] = 0.0 if self.extinction_time is not None else self.rho[-1]
            res = flat.reshape(t.shape) if t.shape else float(flat[0])
            return res
        return np.interp(t, self.times, self.rho)


def _radial_mass(fbar, N, rho):
    """integral of fbar(s) s^(N-1) ds over [0, rho]."""
    if rho <= 0:
        return 0.0
    val, _ = integrate.quad(lambda s: fbar(s) * s ** (N - 1), 0.0, rho, limit=200)
    return val


def _check_monotone(fbar, lo=0.0, hi=1.0, samples=256):
    r = np.linspace(lo, hi, samples)
    v = np.array([float(fbar(x)) for x in r])
    if np.any(v < -1e-15):
        raise DataError("radial density must be nonnegative")
    if np.any(np.diff(v) < -1e-12 * max(1.0, float(np.max(np.abs(v))))):
        raise DataError("radial density must be nondecreasing for the tent-profile solution")


def rho_general(fbar, N, t_grid) -> RhoTrajectory:
    """Integrate the valley ODE -2 rho' = mean of the source over B_rho.

    The density must be continuous and nondecreasing on [0, 1] (the tent
    profile is only the solution in that class); the mean is taken as zero
    once the valley has closed, so extinction is absorbing.
    """
    _check_monotone(fbar, 0.0, 1.0)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 2 or t_grid[0] < 0:
        raise DataError("need an increasing time grid starting at >= 0")

    floor = 1e-12

    def rhs(t, y):
        rho = y[0]
        if rho <= floor:
            return [0.0]
        mean = N * _radial_mass(fbar, N, rho) / rho**N
        return [-0.5 * mean]

    def hit_floor(t, y):
        return y[0] - floor

    hit_floor.terminal = True
    hit_floor.direction = -1

    sol = integrate.solve_ivp(
        rhs, (0.0, float(t_grid[-1])), [0.5], method="RK45",
        rtol=1e-10, atol=1e-13, dense_output=True, events=hit_floor,
    )
    if not sol.success:
        raise DataError(f"valley ODE integration failed: {sol.message}")
    extinction = None
    if sol.t_events[0].size:
        t_ev = float(sol.t_events[0][0])
        rho_ev = floor
        extinction = t_ev + _extinction_tail(fbar, N, rho_ev)
    rho_vals = np.empty_like(t_grid)
    tmax = sol.t[-1]
    for i, t in enumerate(t_grid):
        if t <= tmax:
            rho_vals[i] = max(float(sol.sol(t)[0]), 0.0)
        else:
            rho_vals[i] = 0.0 if extinction is not None else max(float(sol.y[0][-1]), 0.0)
    if extinction is not None:
        rho_vals[t_grid >= extinction] = 0.0
    return RhoTrajectory(times=t_grid, rho=rho_vals, extinction_time=extinction, _dense=sol.sol)


def _extinction_tail(fbar, N, rho_ev):
    """Residual closing time from a tiny valley radius, by local power fit."""
    f1 = float(fbar(rho_ev))
    f2 = float(fbar(0.5 * rho_ev))
    if f1 <= 0:
        return 0.0
    beta = math.log2(max(f1, 1e-300) / max(f2, 1e-300)) if f2 > 0 else 0.0
    beta = min(max(beta, 0.0), 0.999)
    c = f1 / rho_ev**beta
    return 2.0 * (N + beta) * rho_ev ** (1.0 - beta) / (N * c * (1.0 - beta))


def oracle_profile(t, r, traj: RhoTrajectory):
    """Reference profile: rising valley inside rho(t), maximal tent outside."""
    if np.any(np.asarray(t) > traj.times[-1] + 1e-12) and traj.extinction_time is None:
        raise DataError("time beyond the integrated trajectory")
    r = np.asarray(r, dtype=float)
    if np.any((r < 0) | (r > 1)):
        raise DataError("radius outside [0, 1]")
    rho = traj.rho_at(t)
    return np.where(r < rho, 1.0 - 2.0 * rho + r, 1.0 - r)


def cone_growth(t, r, eps, N):
    """Height of the cone grown by a localized source of density eps on a
    ball of radius r: linear until the cone reaches the ball's rim, then the
    mass-balance power law."""
    if not 0 < eps <= r:
        raise DataError("need 0 < eps <= r")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DataError("time must be nonnegative")
    t_knee = r / eps
    late = (r ** (N + 1) + (N + 1) * eps * r**N * (t - t_knee)) ** (1.0 / (N + 1))
    return np.where(t <= t_knee, eps * t, late)


def radial_tau(fbar, N):
    """Closing time of the valley, or inf when the source is too thin at the
    origin for the valley to close.

    Quadrature of 2 |B_rho| / (source mass in B_rho) d(rho) over (0, 1/2]:
    the singular head is integrated by a local power fit of the density,
    diverging exactly when the fitted growth exponent reaches one.
    """
    probes = np.array([1e-6, 1e-5, 1e-4])
    fv = np.array([float(fbar(p)) for p in probes])
    if np.any(fv < 0):
        raise DataError("density must be nonnegative")
    if float(_radial_mass(fbar, N, 0.5)) <= 0:
        return math.inf
    if np.all(fv > 0):
        slopes = np.diff(np.log(fv)) / np.diff(np.log(probes))
        beta = float(np.max(slopes))
    else:
        # Density vanishing on a neighborhood of the origin: mass in small
        # balls is zero, the integrand blows up non-integrably.
        return math.inf
    if beta >= 1.0 - 1e-9:
        return math.inf
    eps = 1e-4
    c = fv[-1] / probes[-1] ** beta
    head = 2.0 * (N + beta) * eps ** (1.0 - beta) / (N * c * (1.0 - beta))

    def integrand(rho):
        return 2.0 * rho**N / (N * _radial_mass(fbar, N, rho))

    tail, _ = integrate.quad(integrand, eps, 0.5, limit=200)
    return head + tail
