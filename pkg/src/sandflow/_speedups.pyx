# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: cone envelope and the admissible-set projection.

The projection runs a flat Dykstra cycle with one correction per constraint
block (the box, then every Lipschitz edge slab), Gauss-Seidel style, with the
edge order reversed on alternating sweeps.  A change-propagation work list
skips blocks whose cells have not moved and whose corrections are clear, so
late sweeps cost only the active neighborhood.  This is the inner loop of
every implicit time step, which is why it is compiled.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def cone_envelope(double[:, ::1] points, double[:, ::1] sites, double[::1] offsets):
    """min_j offsets[j] + |p - s_j| for each point p."""
    cdef Py_ssize_t npts = points.shape[0]
    cdef Py_ssize_t nsites = sites.shape[0]
    cdef Py_ssize_t ndim = points.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(npts)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j, a
    cdef double best, acc, diff
    for i in range(npts):
        best = 1e300
        for j in range(nsites):
            acc = 0.0
            for a in range(ndim):
                diff = points[i, a] - sites[j, a]
                acc += diff * diff
            acc = sqrt(acc) + offsets[j]
            if acc < best:
                best = acc
        ov[i] = best
    return out


def constraint_excess(double[::1] u, double[::1] cap,
                      long long[::1] ei, long long[::1] ej, double[::1] dist):
    """Worst violation, in height units, of the box and edge constraints."""
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t ne = ei.shape[0]
    cdef double worst = 0.0
    cdef double v
    cdef Py_ssize_t i, e
    for i in range(n):
        v = -u[i]
        if v > worst:
            worst = v
        v = u[i] - cap[i]
        if v > worst:
            worst = v
    for e in range(ne):
        v = fabs(u[ei[e]] - u[ej[e]]) - dist[e]
        if v > worst:
            worst = v
    return worst


def graph_project(double[::1] z, double[::1] cap,
                  long long[::1] ei, long long[::1] ej, double[::1] dist,
                  double tol=1e-10, long max_sweeps=10000, bint record_trace=False,
                  state=None):
    """Project z onto {0 <= u <= cap, |u_i - u_j| <= d_e}.

    Returns (u, sweeps, last_change, feasibility_excess, trace).

    ``state``: optional (b, s) correction arrays from a previous projection
    of a nearby point, mutated in place.  Dykstra is block coordinate ascent
    on the dual of the best-approximation problem, so any correction
    initialization converges to the exact projection; warm corrections make
    successive time steps cheap.  The primal iterate is rebuilt from the
    invariant u = z - (box correction) - (edge corrections).
    """
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t ne = ei.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u_arr = np.array(z, copy=True)
    cdef double[::1] u = u_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s_arr
    if state is None:
        b_arr = np.zeros(n)
        s_arr = np.zeros(max(ne, 1))
    else:
        b_arr, s_arr = state
    cdef double[::1] b = b_arr
    cdef double[::1] s = s_arr
    # moved[i]: cell i changed more than the flag threshold in the previous
    # or current sweep; blocks with quiet cells and clear corrections skip.
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] mv_prev = np.ones(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] mv_now = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] moved_prev = mv_prev
    cdef cnp.uint8_t[::1] moved_now = mv_now
    cdef double thr = 0.125 * tol
    cdef list trace = [] if record_trace else None
    cdef Py_ssize_t sweep, i, e, k
    cdef long long a, c
    cdef double y, v, change, yi, yj, g, shift, d1, d2
    cdef double last_change = 0.0
    cdef Py_ssize_t sweeps_done = 0

    if state is not None:
        # rebuild the primal iterate from the dual invariant
        for i in range(n):
            u[i] = z[i] - b[i]
        for e in range(ne):
            u[ei[e]] -= s[e]
            u[ej[e]] += s[e]

    for sweep in range(max_sweeps):
        sweeps_done = sweep + 1
        change = 0.0
        for i in range(n):
            moved_now[i] = 0
        # box blocks
        for i in range(n):
            if moved_prev[i] == 0 and b[i] == 0.0:
                continue
            y = u[i] + b[i]
            v = y
            if v < 0.0:
                v = 0.0
            elif v > cap[i]:
                v = cap[i]
            b[i] = y - v
            d1 = fabs(v - u[i])
            if d1 > change:
                change = d1
            if d1 > thr:
                moved_now[i] = 1
            u[i] = v
        # edge blocks, direction alternating by sweep parity
        for k in range(ne):
            e = k if (sweep & 1) == 0 else ne - 1 - k
            a = ei[e]
            c = ej[e]
            if (moved_prev[a] == 0 and moved_prev[c] == 0
                    and moved_now[a] == 0 and moved_now[c] == 0 and s[e] == 0.0):
                continue
            yi = u[a] + s[e]
            yj = u[c] - s[e]
            g = yi - yj
            if g > dist[e]:
                shift = 0.5 * (g - dist[e])
            elif g < -dist[e]:
                shift = 0.5 * (g + dist[e])
            else:
                shift = 0.0
            s[e] = shift
            v = yi - shift
            d1 = fabs(v - u[a])
            u[a] = v
            v = yj + shift
            d2 = fabs(v - u[c])
            u[c] = v
            if d1 > change:
                change = d1
            if d2 > change:
                change = d2
            if d1 > thr:
                moved_now[a] = 1
            if d2 > thr:
                moved_now[c] = 1
        last_change = change
        for i in range(n):
            moved_prev[i] = moved_now[i]
        if record_trace:
            trace.append(
                (change, max(change, constraint_excess(u, cap, ei, ej, dist)))
            )
        if change < tol:
            break
    feas = constraint_excess(u, cap, ei, ej, dist)
    return u_arr, sweeps_done, last_change, feas, (np.asarray(trace) if record_trace else None)
