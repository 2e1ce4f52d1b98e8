"""Constrained growth dynamics: implicit Euler steps by projection.

Each step projects u + dt*f back onto the admissible set, which is the
catching-up discretization of the governing differential inclusion: it is
unconditionally stable, keeps every iterate admissible, and inherits the
comparison principle from the monotonicity of the projection.

A simulation owns its state exclusively; steps are sequential.  Distinct
simulations may run concurrently with no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataError, NumericalError
from .grid import ScalarField
from .projection import AdmissibleSet, is_admissible, project

# Profile and maximal profile each carry O(h) discretization error, so
# "reached the maximal profile" means within a 3h band.
FINITE_TIME_BAND_FACTOR = 3.0


@dataclass
class SimConfig:
    t_end: float
    dt: float | None = None          # default h/4, set when the grid is known
    snapshot_stride: int = 10
    steady_tol: float = 1e-8
    u0: np.ndarray | None = None     # default: start from the empty container
    # Per-step projection tolerance, with an accept threshold for the rare
    # degenerate steps where Dykstra crawls: the iterate error tracks the
    # per-sweep change, so accepting a stalled step at <= projection_accept
    # costs that much local error once, while per-step errors only
    # accumulate linearly in t/dt.
    projection_tol: float = 1e-9
    projection_accept: float = 1e-7
    max_sweeps: int = 10000
    track: dict = field(default_factory=dict)   # name -> reference values

    def resolve_dt(self, h):
        dt = self.dt if self.dt is not None else h / 4.0
        if not dt > 0:
            raise DataError(f"time step must be positive, got {dt}")
        return dt


@dataclass(eq=False)
class SimTrajectory:
    grid: object
    dt: float
    cap: np.ndarray                   # upper bound field of the run
    times: np.ndarray                 # snapshot times
    profiles: list                    # snapshot value arrays
    step_times: np.ndarray
    total_mass: np.ndarray
    source_mass_rate: float
    discharge_rate: np.ndarray
    step_change: np.ndarray
    dist_to_cap: np.ndarray           # sup(cap - u) per step
    tracked: dict                     # name -> sup|ref - u| per step
    termination: str
    degraded_steps: int = 0

    def snapshot_fields(self):
        return [ScalarField(self.grid, v) for v in self.profiles]

    def final_values(self):
        return self.profiles[-1]


def step(u, f, dt, aset: AdmissibleSet, tol=1e-10, max_sweeps=10000) -> ScalarField:
    """One implicit Euler step: project u + dt*f onto the admissible set."""
    uv = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    fv = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
    if np.any(fv < 0):
        raise DataError("source must be nonnegative")
    return project(uv + dt * fv, aset, tol=tol, max_sweeps=max_sweeps)


def run(config: SimConfig, aset: AdmissibleSet, source: ScalarField) -> SimTrajectory:
    """Iterate steps until t_end or a steady state.

    Steady state: sup-norm step change below steady_tol * dt.  Records a
    snapshot every ``snapshot_stride`` steps plus the final state, and
    per-step scalar diagnostics at every step.
    """
    grid = aset.grid
    dt = config.resolve_dt(grid.h)
    fv = np.asarray(source.values, dtype=float)
    if np.any(fv < 0):
        raise DataError("source must be nonnegative")
    if config.u0 is not None:
        u = np.asarray(config.u0, dtype=float).copy()
        ok, viol = is_admissible(u, aset)
        if not ok:
            raise DataError(f"initial profile is inadmissible (violation {viol:.3e})")
    else:
        u = np.zeros(grid.n_cells)

    ei, ej, dist = aset.edges
    vol = grid.cell_volume
    source_rate = float(fv.sum() * vol)
    track_items = [(k, np.asarray(v, dtype=float)) for k, v in config.track.items()]
    # Warm-started Dykstra corrections: successive steps project nearby
    # points, so the dual state carries over (block coordinate ascent on the
    # dual converges from any start).
    pstate = kernels.make_project_state(grid.n_cells, len(ei))

    times = [0.0]
    profiles = [u.copy()]
    st, sm, sd, sc, scap = [], [], [], [], []
    tracked = {k: [] for k, _ in track_items}
    termination = "t_end"
    degraded_steps = 0
    t = 0.0
    n_steps = int(np.ceil(config.t_end / dt - 1e-12))
    for k in range(n_steps):
        w = u + dt * fv
        u_new, sweeps, change, feas, _ = kernels.graph_project(
            w, aset.cap, ei, ej, dist, config.projection_tol, config.max_sweeps, False,
            state=pstate,
        )
        if change >= config.projection_tol and sweeps >= config.max_sweeps:
            if change <= config.projection_accept:
                degraded_steps += 1
            else:
                raise NumericalError(
                    f"projection stalled at t={t + dt:.6g} (change {change:.3e})",
                    residual=change,
                )
        if not np.all(np.isfinite(u_new)):
            err = NumericalError(f"non-finite profile at t={t + dt:.6g}")
            err.state = u.copy()
            raise err
        # The exact step dominates the previous state, so clamping from
        # below removes projection-error dips and can only move the iterate
        # closer to it (the admissible set is a lattice).
        np.maximum(u_new, u, out=u_new)
        t += dt
        delta = float(np.max(np.abs(u_new - u))) if len(u_new) else 0.0
        mass = float(u_new.sum() * vol)
        prev_mass = float(u.sum() * vol)
        st.append(t)
        sm.append(mass)
        sd.append(max(source_rate - (mass - prev_mass) / dt, 0.0))
        sc.append(delta)
        scap.append(float(np.max(aset.cap - u_new, initial=0.0)))
        for name, ref in track_items:
            tracked[name].append(float(np.max(np.abs(ref - u_new))))
        u = u_new
        if (k + 1) % config.snapshot_stride == 0:
            times.append(t)
            profiles.append(u.copy())
        if delta < config.steady_tol * dt:
            termination = "steady"
            break
    if times[-1] != t:
        times.append(t)
        profiles.append(u.copy())
    return SimTrajectory(
        grid=grid,
        dt=dt,
        cap=np.asarray(aset.cap, dtype=float),
        times=np.asarray(times),
        profiles=profiles,
        step_times=np.asarray(st),
        total_mass=np.asarray(sm),
        source_mass_rate=source_rate,
        discharge_rate=np.asarray(sd),
        step_change=np.asarray(sc),
        dist_to_cap=np.asarray(scap),
        tracked={k: np.asarray(v) for k, v in tracked.items()},
        termination=termination,
        degraded_steps=degraded_steps,
    )


def vi_residual(u, u_prev, dt, f, probes):
    """Worst violation of the maximality condition over the probe fields.

    residual(w) = integral of (f - du/dt)(w - u); nonpositive for every
    admissible w at the exact solution, so the max over probes bounds how
    far the discrete step is from satisfying the inequality.
    """
    uv = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    pv = u_prev.values if isinstance(u_prev, ScalarField) else np.asarray(u_prev, dtype=float)
    fv = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
    grid = u.grid if isinstance(u, ScalarField) else f.grid
    rate = fv - (uv - pv) / dt
    worst = -np.inf
    for w in probes:
        wv = w.values if isinstance(w, ScalarField) else np.asarray(w, dtype=float)
        worst = max(worst, grid.integrate(rate * (wv - uv)))
    return worst


def make_probes(aset: AdmissibleSet, u_phi, u_f=None, n_random=5, seed=0):
    """Probe family for the maximality residual: extreme elements plus
    projected random noise."""
    probes = [np.zeros(aset.n_cells), np.asarray(u_phi.values, dtype=float)]
    if u_f is not None:
        probes.append(np.asarray(u_f.values, dtype=float))
    rng = np.random.default_rng(seed)
    scale = float(aset.cap.max(initial=1.0))
    for _ in range(n_random):
        noise = rng.normal(0.5 * scale, 0.5 * scale, aset.n_cells)
        probes.append(project(noise, aset).values)
    return probes


def detect_finite_time(traj: SimTrajectory, u_phi: ScalarField):
    """Earliest recorded time with sup|u - maximal profile| within the 3h band.

    Uses the per-step distance series when the reference equals the run's
    upper bound field (the usual case, and step resolution beats snapshot
    resolution); otherwise scans the snapshots.
    """
    if len(traj.profiles) == 0:
        raise DataError("empty trajectory")
    band = FINITE_TIME_BAND_FACTOR * traj.grid.h
    ref = np.asarray(u_phi.values, dtype=float)
    if traj.dist_to_cap.size and np.array_equal(ref, traj.cap):
        hits = np.nonzero(traj.dist_to_cap <= band)[0]
        return float(traj.step_times[hits[0]]) if hits.size else None
    for t, vals in zip(traj.times, traj.profiles):
        if float(np.max(np.abs(ref - vals))) <= band:
            return float(t)
    return None


def compare_runs(f1, f2, u01, u02, config: SimConfig, aset: AdmissibleSet):
    """Run two ordered problems and check the ordering of the trajectories.

    Requires f1 >= f2 and u01 >= u02; returns a report with the worst
    pointwise deficit of u1 - u2 over all common snapshot times.
    """
    f1v = f1.values if isinstance(f1, ScalarField) else np.asarray(f1, dtype=float)
    f2v = f2.values if isinstance(f2, ScalarField) else np.asarray(f2, dtype=float)
    if np.any(f1v < f2v - 1e-15):
        raise DataError("need f1 >= f2 pointwise")
    z = np.zeros(aset.n_cells)
    u01v = z if u01 is None else np.asarray(u01, dtype=float)
    u02v = z if u02 is None else np.asarray(u02, dtype=float)
    if np.any(u01v < u02v - 1e-15):
        raise DataError("need u01 >= u02 pointwise")
    cfg1 = _with_u0(config, u01v)
    cfg2 = _with_u0(config, u02v)
    tr1 = run(cfg1, aset, _as_field(f1, aset))
    tr2 = run(cfg2, aset, _as_field(f2, aset))
    n = min(len(tr1.profiles), len(tr2.profiles))
    deficit = 0.0
    for a, b in zip(tr1.profiles[:n], tr2.profiles[:n]):
        deficit = max(deficit, float(np.max(b - a, initial=0.0)))
    return {
        "max_deficit": deficit,
        "ordered": deficit <= 1e-7,
        "trajectory_1": tr1,
        "trajectory_2": tr2,
    }


def _with_u0(config, u0):
    from dataclasses import replace

    return replace(config, u0=u0)


def _as_field(f, aset):
    if isinstance(f, ScalarField):
        return f
    return ScalarField(aset.grid, np.asarray(f, dtype=float), name="source")
