"""Pure-numpy fallback kernels.

Same contracts as the compiled module ``sandflow._speedups``: a cone
envelope (min over sites of offset + distance) and the projection onto
{0 <= u <= cap} intersected with the per-edge Lipschitz slabs
{|u_i - u_j| <= d_e}.

The projection here is a two-block Dykstra alternation: pointwise clipping
for the box, and an accelerated dual fixed-point iteration (per-edge
soft-thresholding, step 1/L) for the Lipschitz ball.  The compiled backend
reaches the same fixed point with Gauss-Seidel sweeps over per-constraint
blocks and is much faster; this path exists so the package works without a
compiler and as an independent cross-check of the compiled kernels.
"""

from __future__ import annotations

import numpy as np


def cone_envelope(points, sites, offsets, chunk=2048):
    """min_j offsets[j] + |p - s_j| for each point p, chunked to bound memory."""
    points = np.asarray(points, dtype=float)
    sites = np.asarray(sites, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    out = np.empty(len(points))
    schunk = max(1, int(4e6) // max(chunk, 1))
    for i0 in range(0, len(points), chunk):
        p = points[i0 : i0 + chunk]
        best = np.full(len(p), np.inf)
        for j0 in range(0, len(sites), schunk):
            s = sites[j0 : j0 + schunk]
            o = offsets[j0 : j0 + schunk]
            d = np.sqrt(((p[:, None, :] - s[None, :, :]) ** 2).sum(-1))
            np.minimum(best, (d + o[None, :]).min(axis=1), out=best)
        out[i0 : i0 + chunk] = best
    return out


def constraint_excess(u, cap, ei, ej, dist):
    """Worst violation, in height units, of the box and edge constraints."""
    box = max(float(np.max(-u, initial=0.0)), float(np.max(u - cap, initial=0.0)))
    if len(ei):
        edge = float(np.max(np.abs(u[ei] - u[ej]) - dist, initial=0.0))
    else:
        edge = 0.0
    return max(box, edge)


def _project_lipschitz_ball(t, ei, ej, dist, n, sigma, p0, tol, max_iter):
    """Euclidean projection of t onto {|u_i - u_j| <= d_e for all e}.

    Dual fixed-point iteration (per-edge soft-thresholding at step sigma)
    with Nesterov momentum and gradient-based restart; ``p0`` warm-starts the
    dual multipliers.  Returns (primal point, final dual state).
    """
    if len(ei) == 0:
        return t.copy(), p0
    w = 1.0 / dist
    p = p0.copy()
    y = p.copy()
    theta = 1.0
    u_prev = t - _adjoint(p, ei, ej, w, n)
    for _ in range(max_iter):
        u = t - _adjoint(y, ei, ej, w, n)
        g = (u[ei] - u[ej]) * w
        q = y + sigma * g
        p_new = np.sign(q) * np.maximum(np.abs(q) - sigma, 0.0)
        if np.dot(g, p_new - p) < 0.0:  # momentum restart
            y = p_new.copy()
            theta_new = 1.0
        else:
            theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            y = p_new + ((theta - 1.0) / theta_new) * (p_new - p)
        p, theta = p_new, theta_new
        delta = float(np.max(np.abs(u - u_prev)))
        u_prev = u
        if delta < tol:
            break
    return t - _adjoint(p, ei, ej, w, n), p


def _adjoint(p, ei, ej, w, n):
    pw = p * w
    return np.bincount(ei, weights=pw, minlength=n) - np.bincount(ej, weights=pw, minlength=n)


def make_project_state(n_cells, n_edges):
    return {
        "box": np.zeros(n_cells),
        "lip": np.zeros(n_cells),
        "dual": np.zeros(max(n_edges, 1)),
    }


def graph_project(z, cap, ei, ej, dist, tol=1e-10, max_sweeps=10000, record_trace=False,
                  state=None):
    """Project z onto the admissible polytope.

    Returns (u, sweeps, last_change, feasibility_excess, trace) where trace
    is an array of per-sweep (change, kkt) rows when requested, else None.
    Dykstra corrections (and the inner dual multipliers) may be warm-started
    through ``state``: the alternation is block coordinate ascent on the
    dual, which converges from any initialization.
    """
    z = np.asarray(z, dtype=float)
    cap = np.asarray(cap, dtype=float)
    ei = np.asarray(ei, dtype=np.int64)
    ej = np.asarray(ej, dtype=np.int64)
    dist = np.asarray(dist, dtype=float)
    n = len(z)
    if len(ei) == 0:
        u = np.clip(z, 0.0, cap)
        return u, 1, 0.0, 0.0, (np.zeros((1, 2)) if record_trace else None)

    # Step 1/L for the dual iteration; L bounds the squared norm of the
    # scaled difference operator.
    deg = np.bincount(ei, weights=1.0 / dist**2, minlength=n) + np.bincount(
        ej, weights=1.0 / dist**2, minlength=n
    )
    sigma = 1.0 / (2.0 * float(deg.max()))

    if state is None:
        state = make_project_state(n, len(ei))
    p_box = state["box"]
    p_lip = state["lip"]
    dual = state["dual"]
    x = z - p_box - p_lip
    trace = [] if record_trace else None
    inner_tol = max(tol * 0.05, 1e-15)
    last_change = np.inf
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        t1 = x + p_box
        y = np.clip(t1, 0.0, cap)
        p_box = t1 - y
        t2 = y + p_lip
        x_new, dual = _project_lipschitz_ball(t2, ei, ej, dist, n, sigma, dual, inner_tol, 4000)
        p_lip = t2 - x_new
        last_change = float(np.max(np.abs(x_new - x)))
        x = x_new
        if record_trace:
            kkt = max(last_change, constraint_excess(x, cap, ei, ej, dist))
            trace.append((last_change, kkt))
        if last_change < tol:
            break
    state["box"] = p_box
    state["lip"] = p_lip
    state["dual"] = dual
    feas = constraint_excess(x, cap, ei, ej, dist)
    return x, sweeps, last_change, feas, (np.asarray(trace) if record_trace else None)
