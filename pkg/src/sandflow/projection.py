"""L2 projection onto the discrete admissible set.

The set couples a box constraint (0 <= u <= cap, with the cap the maximal
profile, so the wall condition is a bound, not a ghost-node condition) with
discrete Lipschitz constraints |u_i - u_j| <= |x_i - x_j| over a neighbor
stencil.  Edge constraints rather than a per-cell Euclidean norm of forward
differences: the sampled maximal profile itself must belong to the set, and
cone-shaped profiles (which is what piles are) violate a forward-difference
norm by O(1) at ridge cells while satisfying every metric edge constraint
exactly.

The projection is a Dykstra cycle with one correction vector per constraint
block, run until the combined primal change per sweep drops below tolerance.
It is the kernel of each implicit time step, reentrant, and data-parallel
across cells within a sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels_py, kernels
from .errors import DataError, NumericalError, SizeError
from .grid import Grid, ScalarField

QP_ORACLE_MAX_CELLS = 50


@dataclass(eq=False)
class AdmissibleSet:
    """Discrete admissible profiles: box bounds plus metric edge constraints."""

    grid: Grid
    cap: np.ndarray            # upper bound field (maximal profile on the grid)
    edges: tuple               # (i, j, dist) arrays
    tau_feas: float
    stencil: str

    @property
    def n_cells(self):
        return self.grid.n_cells

    def contains_zero_and_cap(self):
        """Both extreme elements must be members; cheap self-check."""
        ok0, _ = is_admissible(np.zeros(self.n_cells), self)
        okc, _ = is_admissible(self.cap, self)
        return ok0 and okc


def make_admissible_set(u_phi: ScalarField, stencil="knight") -> AdmissibleSet:
    cap = np.asarray(u_phi.values, dtype=float)
    if np.any(cap < 0):
        raise DataError("upper bound field must be nonnegative")
    ei, ej, dist = u_phi.grid.edge_table(stencil)
    # Sweep edges uphill (by cap height): redistribution travels along
    # downhill chains, so height-ordered Gauss-Seidel passes propagate a
    # whole chain per sweep instead of diffusing.
    order = np.argsort(cap[ei] + cap[ej], kind="stable")
    ei, ej, dist = ei[order], ej[order], dist[order]
    tau = 1e-8 * (1.0 + float(cap.max(initial=0.0)))
    return AdmissibleSet(grid=u_phi.grid, cap=cap, edges=(ei, ej, dist), tau_feas=tau, stencil=stencil)


def is_admissible(u, aset: AdmissibleSet):
    """(flag, max_violation): violations measured in height units."""
    values = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    if values.shape != (aset.n_cells,):
        raise DataError("field does not match the admissible set's grid")
    ei, ej, dist = aset.edges
    worst = kernels.constraint_excess(values, aset.cap, ei, ej, dist)
    worst = max(worst, 0.0)
    return worst <= aset.tau_feas, worst


@dataclass
class ProjectionInfo:
    sweeps: int
    primal_change: float
    feasibility: float
    kkt_residual: float
    trace: np.ndarray | None = None


def project(w, aset: AdmissibleSet, tol=1e-10, max_sweeps=10000,
            record_trace=False, engine="auto"):
    """Nearest admissible field to w in the grid L2 norm.

    Engines: "auto" uses the selected kernel backend (compiled Gauss-Seidel
    Dykstra when available); "dual" forces the two-block alternation with the
    dual fixed-point inner loop.  Both converge to the same projection.
    Raises NumericalError when the sweep budget runs out.
    """
    field = isinstance(w, ScalarField)
    values = w.values if field else np.asarray(w, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataError("projection input must be finite")
    grid = aset.grid
    if float(aset.cap.max(initial=0.0)) <= aset.tau_feas:
        # Degenerate wall data: the set is {0}.
        out = np.zeros(aset.n_cells)
        info = ProjectionInfo(0, 0.0, 0.0, 0.0, None)
        return _wrap(out, grid, info, field and w.name)
    ei, ej, dist = aset.edges
    if engine == "dual":
        impl = _kernels_py.graph_project
    else:
        impl = kernels.graph_project
    u, sweeps, change, feas, trace = impl(
        values, aset.cap, ei, ej, dist, tol, max_sweeps, record_trace
    )
    if change >= tol and sweeps >= max_sweeps:
        raise NumericalError(
            f"projection did not converge in {max_sweeps} sweeps "
            f"(last primal change {change:.3e})",
            residual=change,
        )
    info = ProjectionInfo(
        sweeps=sweeps,
        primal_change=change,
        feasibility=feas,
        kkt_residual=max(change, feas),
        trace=trace,
    )
    return _wrap(u, grid, info, field and w.name)


def _wrap(values, grid, info, name):
    out = ScalarField(grid, values, name=name or "")
    out.meta["projection"] = info
    return out


def projection_info(field: ScalarField) -> ProjectionInfo:
    return field.meta["projection"]


def qp_oracle_project(w, aset: AdmissibleSet) -> ScalarField:
    """Exact reference projection via a dense convex QP (small grids only).

    Independent route: hands the full constraint list to an interior-point
    solver instead of iterating projections.
    """
    import cvxpy as cp

    field = isinstance(w, ScalarField)
    values = w.values if field else np.asarray(w, dtype=float)
    n = aset.n_cells
    if n > QP_ORACLE_MAX_CELLS:
        raise SizeError(f"QP oracle limited to {QP_ORACLE_MAX_CELLS} cells, got {n}")
    ei, ej, dist = aset.edges
    u = cp.Variable(n)
    cons = [u >= 0, u <= aset.cap]
    if len(ei):
        diff = u[ei] - u[ej]
        cons += [diff <= dist, diff >= -dist]
    prob = cp.Problem(cp.Minimize(cp.sum_squares(u - values)), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise NumericalError(f"QP oracle failed with status {prob.status}")
    out = np.clip(np.asarray(u.value, dtype=float), 0.0, aset.cap)
    return ScalarField(aset.grid, out, name="qp_projection")
