"""Backend selection for the hot kernels.

Imports the compiled extension when available; otherwise (or when the
environment variable ``SANDFLOW_NO_EXT`` is set to a nonempty value other
than ``0``) falls back to the pure-numpy implementations.  Both backends
compute the same quantities; ``benchmarks/bench_kernels.py`` compares them.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_FORCE_PY = os.environ.get("SANDFLOW_NO_EXT", "0") not in ("", "0")

if not _FORCE_PY:
    try:
        from . import _speedups  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _speedups = None
        BACKEND = "python"
else:
    _speedups = None
    BACKEND = "python"


def backend_name():
    return BACKEND


def cone_envelope(points, sites, offsets):
    points = np.ascontiguousarray(points, dtype=float)
    sites = np.ascontiguousarray(sites, dtype=float)
    offsets = np.ascontiguousarray(offsets, dtype=float)
    if BACKEND == "compiled":
        return _speedups.cone_envelope(points, sites, offsets)
    return _kernels_py.cone_envelope(points, sites, offsets)


def make_project_state(n_cells, n_edges):
    """Reusable warm-start state for successive projections of nearby points."""
    if BACKEND == "compiled":
        return (np.zeros(n_cells), np.zeros(max(n_edges, 1)))
    return _kernels_py.make_project_state(n_cells, n_edges)


def graph_project(z, cap, ei, ej, dist, tol=1e-10, max_sweeps=10000, record_trace=False,
                  state=None):
    z = np.ascontiguousarray(z, dtype=float)
    cap = np.ascontiguousarray(cap, dtype=float)
    ei = np.ascontiguousarray(ei, dtype=np.int64)
    ej = np.ascontiguousarray(ej, dtype=np.int64)
    dist = np.ascontiguousarray(dist, dtype=float)
    if BACKEND == "compiled":
        return _speedups.graph_project(z, cap, ei, ej, dist, tol, max_sweeps, record_trace, state)
    return _kernels_py.graph_project(z, cap, ei, ej, dist, tol, max_sweeps, record_trace, state)


def constraint_excess(u, cap, ei, ej, dist):
    u = np.ascontiguousarray(u, dtype=float)
    cap = np.ascontiguousarray(cap, dtype=float)
    ei = np.ascontiguousarray(ei, dtype=np.int64)
    ej = np.ascontiguousarray(ej, dtype=np.int64)
    dist = np.ascontiguousarray(dist, dtype=float)
    if BACKEND == "compiled":
        return _speedups.constraint_excess(u, cap, ei, ej, dist)
    return _kernels_py.constraint_excess(u, cap, ei, ej, dist)
