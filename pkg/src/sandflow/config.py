"""Run configuration: JSON ingestion and problem assembly.

Accepts either the sectioned layout (``domain``, ``phi``, ``source``,
``grid``, ``evolution``, ``analysis``) or the flat layout with ``dimension``,
``shape``, ``phi``, ``source``, ``h``, ``m`` at top level; flat keys are
lifted into their sections.  Every numeric choice not given falls back to
the documented default (dt = h/4, boundary samples m = max(256,
perimeter/h) in 2D).
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .errors import ConfigError, DataError
from .evolution import SimConfig
from .geometry import Ball, Box, ConvexPolygon, DomainSpec, Interval, build_domain
from .grid import Grid, ScalarField, build_grid, discretize_source


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return normalize_config(cfg), text


def normalize_config(cfg):
    """Lift flat keys into sections and fill defaults."""
    out = dict(cfg)
    domain = dict(out.get("domain", {}))
    for key in ("dimension", "shape"):
        if key in out and key not in domain:
            domain[key] = out.pop(key)
    out["domain"] = domain
    grid = dict(out.get("grid", {}))
    for key in ("h", "m"):
        if key in out and key not in grid:
            grid[key] = out.pop(key)
    out["grid"] = grid
    out.setdefault("phi", 0.0)
    out.setdefault("source", {"name": "zero"})
    out.setdefault("evolution", {})
    out.setdefault("analysis", {})
    return out


def _build_shape(domain_cfg):
    try:
        dim = int(domain_cfg["dimension"])
        shp = domain_cfg["shape"]
        kind = shp["type"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"domain section incomplete: {exc}") from exc
    try:
        if kind == "interval":
            shape = Interval(float(shp["a"]), float(shp["b"]))
        elif kind == "ball":
            shape = Ball(np.asarray(shp["center"], dtype=float), float(shp["radius"]))
        elif kind == "convex_polygon":
            shape = ConvexPolygon(np.asarray(shp["vertices"], dtype=float))
        elif kind == "box":
            shape = Box(shp["lo"], shp["hi"])
        else:
            raise ConfigError(f"unknown shape type {kind!r}")
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad shape parameters: {exc}") from exc
    return dim, shape


def _phi_fn(phi_cfg, sample_points):
    if isinstance(phi_cfg, (int, float)):
        value = float(phi_cfg)
        if value < 0:
            raise ConfigError("phi must be nonnegative")
        return lambda p: value
    if isinstance(phi_cfg, dict):
        name = phi_cfg.get("name", "constant")
        if name == "constant":
            value = float(phi_cfg.get("value", 0.0))
            return lambda p: value
        if name == "per_sample":
            vals = np.asarray([float(v) for v in phi_cfg["values"]])
            if len(vals) != len(sample_points):
                raise ConfigError(
                    f"per-sample phi needs {len(sample_points)} values, got {len(vals)}"
                )
            pts = np.asarray(sample_points, dtype=float)

            def fn(p):
                k = int(np.argmin(np.linalg.norm(pts - np.asarray(p, dtype=float), axis=1)))
                return float(vals[k])

            return fn
        if name == "linear":
            grad = np.asarray(phi_cfg.get("gradient", [0.0]), dtype=float)
            off = float(phi_cfg.get("offset", 0.0))
            return lambda p: max(float(np.dot(grad, p) + off), 0.0)
    raise ConfigError(f"unsupported phi specification: {phi_cfg!r}")


def _source_fn(source_cfg, dim):
    """Returns (callable or None, csv_path or None)."""
    if not isinstance(source_cfg, dict):
        raise ConfigError("source must be an object")
    if "csv" in source_cfg:
        return None, source_cfg["csv"]
    name = source_cfg.get("name", "zero")
    if name == "zero":
        return (lambda p: 0.0), None
    if name == "constant":
        c = float(source_cfg.get("value", 1.0))
        if c < 0:
            raise ConfigError("source must be nonnegative")
        return (lambda p: c), None
    if name == "power_law":
        alpha = float(source_cfg["alpha"])
        center = np.asarray(source_cfg.get("center", [0.0] * dim), dtype=float)
        amp = dim + alpha
        return (lambda p: amp * float(np.linalg.norm(np.asarray(p) - center)) ** alpha), None
    if name == "radial_power":
        coeff = float(source_cfg.get("coeff", 1.0))
        expo = float(source_cfg.get("exponent", 1.0))
        center = np.asarray(source_cfg.get("center", [0.0] * dim), dtype=float)
        return (lambda p: coeff * float(np.linalg.norm(np.asarray(p) - center)) ** expo), None
    if name == "indicator":
        lo = np.asarray(source_cfg["lo"], dtype=float)
        hi = np.asarray(source_cfg["hi"], dtype=float)
        value = float(source_cfg.get("value", 1.0))
        return (
            lambda p: value if bool(np.all(np.asarray(p) >= lo) and np.all(np.asarray(p) <= hi)) else 0.0
        ), None
    raise ConfigError(f"unknown source form {name!r}")


def _read_source_csv(path, grid: Grid):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read source CSV: {exc}") from exc
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    if len(rows) != grid.n_cells:
        raise ConfigError(f"source CSV has {len(rows)} rows, grid has {grid.n_cells} cells")
    vals = np.empty(grid.n_cells)
    for row in rows:
        pt = np.asarray([float(x) for x in row[: grid.ndim]])
        c = grid.nearest_cell(pt)
        if np.linalg.norm(grid.centers[c] - pt) > 0.5 * grid.h:
            raise ConfigError(f"source CSV point {pt} does not match a grid cell")
        vals[c] = float(row[grid.ndim])
    if np.any(vals < 0):
        raise ConfigError("source CSV contains negative densities")
    return vals


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


class Problem:
    """Assembled run: geometry, grid, fields, and evolution settings."""

    def __init__(self, cfg):
        cfg = normalize_config(cfg)
        self.raw = cfg
        dim, shape = _build_shape(cfg["domain"])
        grid_cfg = cfg["grid"]
        try:
            h = float(grid_cfg["h"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"grid.h missing or invalid: {exc}") from exc
        if h <= 0:
            raise ConfigError(f"grid.h must be positive, got {h}")
        if dim == 1:
            m = 2
        elif "m" in grid_cfg:
            m = int(grid_cfg["m"])
        else:
            m = max(256, int(math.ceil(shape.perimeter() / h)))
        try:
            spec = DomainSpec(dimension=dim, shape=shape, boundary_sample_count=m)
            sample_points = shape.boundary_samples(2 if dim == 1 else m)
            phi_fn = _phi_fn(cfg["phi"], sample_points)
            self.domain, self.boundary = build_domain(spec, phi_fn)
            self.grid = build_grid(self.domain, h)
        except (DataError, ConfigError):
            raise
        except Exception as exc:
            raise ConfigError(str(exc)) from exc
        fn, csv_path = _source_fn(cfg["source"], dim)
        if csv_path is not None:
            self.source = ScalarField(self.grid, _read_source_csv(csv_path, self.grid), name="source")
            self.source_fn = None
        else:
            self.source = discretize_source(self.domain, self.grid, fn)
            self.source_fn = fn
        self.evolution_cfg = cfg["evolution"]
        self.analysis_cfg = cfg["analysis"]

    def sim_config(self, u0_values=None, track=None):
        ev = self.evolution_cfg
        dt = ev.get("dt")
        cfg = SimConfig(
            t_end=float(ev.get("t_end", 1.0)),
            dt=None if dt is None else float(dt),
            snapshot_stride=int(ev.get("snapshot_stride", 10)),
            steady_tol=float(ev.get("steady_tol", 1e-8)),
            u0=u0_values,
            track=track or {},
        )
        if "projection_tol" in ev:
            cfg.projection_tol = float(ev["projection_tol"])
        if "projection_accept" in ev:
            cfg.projection_accept = float(ev["projection_accept"])
        if "max_sweeps" in ev:
            cfg.max_sweeps = int(ev["max_sweeps"])
        if cfg.t_end <= 0:
            raise ConfigError("evolution.t_end must be positive")
        return cfg
