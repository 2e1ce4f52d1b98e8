"""Run artifacts: CSV fields, JSON metadata, gnuplot mirrors, manifests.

All numeric output goes to CSV with fixed 17-significant-digit formatting
(byte-identical across runs of the same configuration and backend), all
metadata to JSON, and each CSV gets a whitespace-separated ``.dat`` mirror
under ``plots/`` for direct gnuplot use.
"""

from __future__ import annotations

import hashlib
import json
import os
import time

import numpy as np

from . import __version__, kernels


def _fmt(x):
    return f"{float(x):.17g}"


def _write_rows(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return path


def write_field_csv(path, field):
    grid = field.grid
    header = "x,value" if grid.ndim == 1 else "x,y,value"
    rows = (tuple(c) + (v,) for c, v in zip(grid.centers, field.values))
    return _write_rows(path, header, rows)


def write_points_csv(path, points, ndim):
    header = "x" if ndim == 1 else "x,y"
    return _write_rows(path, header, (tuple(np.atleast_1d(p)) for p in points))


def write_rays_csv(path, rays):
    nd = rays.grid.ndim
    if nd == 1:
        header = "y_x,x_x,length"
    else:
        header = "y_x,y_y,x_x,x_y,length"
    rows = (
        tuple(rays.initial[i]) + tuple(rays.final[i]) + (rays.length[i],)
        for i in range(rays.n_rays)
    )
    return _write_rows(path, header, rows)


def write_nu_csv(path, nu):
    boundary = nu.boundary
    nd = boundary.points.shape[1]
    header = "sample_index,x,weight" if nd == 1 else "sample_index,x,y,weight"
    rows = (
        (i,) + tuple(boundary.points[i]) + (nu.weights[i],)
        for i in range(len(nu.weights))
    )
    return _write_rows(path, header, rows)


def write_diagnostics_csv(path, traj):
    header = "t,total_mass,source_mass_rate,discharge_rate,step_change"
    rows = (
        (t, m, traj.source_mass_rate, d, s)
        for t, m, d, s in zip(
            traj.step_times, traj.total_mass, traj.discharge_rate, traj.step_change
        )
    )
    return _write_rows(path, header, rows)


def write_metrics_csv(path, traj):
    names = sorted(traj.tracked)
    header = ",".join(["t", "dist_to_max_profile"] + [f"dist_{n}" for n in names])
    cols = [traj.step_times, traj.dist_to_cap] + [traj.tracked[n] for n in names]
    return _write_rows(path, header, zip(*cols))


def write_snapshots(out_dir, traj):
    snap_dir = os.path.join(out_dir, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    files = []
    index_rows = []
    grid = traj.grid
    header = "x,value" if grid.ndim == 1 else "x,y,value"
    for k, (t, vals) in enumerate(zip(traj.times, traj.profiles)):
        path = os.path.join(snap_dir, f"t_{k}.csv")
        _write_rows(path, header, (tuple(c) + (v,) for c, v in zip(grid.centers, vals)))
        files.append(path)
        index_rows.append((k, t))
    idx = os.path.join(snap_dir, "index.csv")
    _write_rows(idx, "k,t", index_rows)
    files.append(idx)
    return files


def mirror_to_dat(csv_path, out_dir):
    """Gnuplot-compatible whitespace-separated mirror under plots/."""
    plots = os.path.join(out_dir, "plots")
    os.makedirs(plots, exist_ok=True)
    base = os.path.splitext(os.path.basename(csv_path))[0]
    dat = os.path.join(plots, base + ".dat")
    with open(csv_path, "r", encoding="utf-8") as src, open(dat, "w", encoding="utf-8", newline="\n") as dst:
        for i, line in enumerate(src):
            line = line.rstrip("\n")
            if i == 0:
                dst.write("# " + " ".join(line.split(",")) + "\n")
            else:
                dst.write(" ".join(line.split(",")) + "\n")
    return dat


def write_json(path, obj):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def config_hash(config_text):
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()


class RunManifest:
    """Collects run metadata; the file index lists only files written."""

    def __init__(self, config_echo, config_text, seed=0):
        self.data = {
            "artifact_version": __version__,
            "backend": kernels.backend_name(),
            "config": config_echo,
            "config_sha256": config_hash(config_text),
            "seed": seed,
            "grid": {},
            "wall_clock_seconds": None,
            "termination_reason": None,
            "files": [],
        }
        self._t0 = time.time()

    def set_grid(self, grid, m):
        self.data["grid"] = {
            "h": grid.h,
            "cell_count": grid.n_cells,
            "boundary_samples": m,
            "dimension": grid.ndim,
        }

    def add_files(self, out_dir, paths):
        for p in paths if isinstance(paths, (list, tuple)) else [paths]:
            self.data["files"].append(os.path.relpath(p, out_dir))

    def finish(self, out_dir, termination="ok", extra=None):
        self.data["wall_clock_seconds"] = time.time() - self._t0
        self.data["termination_reason"] = termination
        if extra:
            self.data.update(extra)
        path = os.path.join(out_dir, "manifest.json")
        self.data["files"].append("manifest.json")
        write_json(path, self.data)
        return path
