"""Run artifacts: delimited snapshots, JSON manifests, and figure rendering.

CSV is the normative output (12 significant digits, header row, long format);
the manifest is written last so its presence marks a completed run and its
digests certify the files next to it.  Figures are a convenience layer drawn
with matplotlib onto files beside the CSVs; SVG output pins the hash salt and
drops the date metadata so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from typing import Iterable, Sequence

import numpy as np

from .core import Grid, ScalarField, SpaceTimeField, SpaceTimeMask

_SVG_SALT = "survfront"


def fmt12(v) -> str:
    return "%.12g" % float(v)


def fmt6(v: float, u_floor: float) -> str:
    """Human-facing value: 6 significant digits (trailing zeros kept), extinct states named."""
    if v <= u_floor:
        return "EXTINCT"
    return "%#.6g" % v


def sha256_of(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_rows(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt12(c) for c in row])
    return path


def _snapshot_indices(grid: Grid, times) -> list[int]:
    if times is None:
        return list(range(grid.nt + 1))
    return [grid.t_index(float(t)) for t in times]


def write_field_csv(path: str, field: SpaceTimeField, times=None, value_name: str = "u") -> str:
    grid = field.grid
    x = grid.nodes()
    ts = grid.times()
    rows = []
    for k in _snapshot_indices(grid, times):
        for i in range(grid.nx):
            rows.append((x[i], ts[k], field.values[k, i]))
    return write_rows(path, ("x", "t", value_name), rows)


def write_profile_csv(path: str, field: ScalarField, name: str = "u") -> str:
    x = field.grid.nodes()
    return write_rows(path, ("x", name), zip(x, field.values))


def write_trajectory_csv(path: str, traj, field: SpaceTimeField | None = None) -> str:
    """Samples are (x, t) pairs; the running value is the field along the path
    (cost-to-come by dynamic programming), or the terminal value when no field
    is supplied."""
    rows = []
    for (xx, tt) in traj.samples:
        rv = field.at(xx, tt) if field is not None else traj.value
        rows.append((tt, xx, rv))
    return write_rows(path, ("t", "x", "running_value"), rows)


def write_mask_csv(path: str, mask: SpaceTimeMask) -> str:
    grid = mask.grid
    x = grid.nodes()
    ts = grid.times()
    rows = []
    for k in range(grid.nt + 1):
        for i in range(grid.nx):
            rows.append((x[i], ts[k], str(int(mask.flags[k, i]))))
    return write_rows(path, ("x", "t", "in_omega"), rows)


def write_json(path: str, payload: dict) -> str:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_manifest(out_dir: str, config_echo: dict, files: list[str],
                   extra: dict | None = None, timings: dict | None = None) -> str:
    """Digest every emitted file, then write manifest.json as the final artifact.

    Timings sit in their own key so determinism checks can ignore them.
    """
    digests = {os.path.basename(p): sha256_of(p) for p in files}
    payload = {"config": config_echo, "outputs": digests}
    if extra:
        payload.update(extra)
    if timings is not None:
        payload["timings"] = timings
    return write_json(os.path.join(out_dir, "manifest.json"), payload)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = _SVG_SALT
    return plt


def _save(fig, path: str) -> str:
    fig.savefig(path, metadata={"Date": None} if path.endswith(".svg") else None)
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path


def render_heatmap(path: str, field: SpaceTimeField, level: float | None = None,
                   title: str = "u") -> str:
    """Space-time heatmap with extinct cells blanked; optional level contour."""
    plt = _pyplot()
    grid = field.grid
    vals = np.where(field.finite(), field.values, np.nan)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    extent = (grid.x_min, grid.x_max, 0.0, grid.t_final)
    im = ax.imshow(vals, origin="lower", aspect="auto", extent=extent,
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label=title)
    if level is not None and np.any(field.finite()):
        ax.contour(grid.nodes(), grid.times(), vals, levels=[level],
                   colors="black", linewidths=1.0)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(title)
    return _save(fig, path)


def render_mask(path: str, mask: SpaceTimeMask, title: str = "omega") -> str:
    plt = _pyplot()
    grid = mask.grid
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    extent = (grid.x_min, grid.x_max, 0.0, grid.t_final)
    ax.imshow(mask.flags.astype(float), origin="lower", aspect="auto",
              extent=extent, interpolation="nearest", vmin=0.0, vmax=1.0)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(title)
    return _save(fig, path)


def render_profiles(path: str, x: np.ndarray, curves: dict, u_floor: float,
                    title: str = "profiles") -> str:
    """Overlay 1-d curves; sentinel values break the line."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name in sorted(curves):
        ys = np.asarray(curves[name], dtype=float)
        ax.plot(x, np.where(ys > u_floor, ys, np.nan), label=name)
    ax.set_xlabel("x")
    ax.legend()
    ax.set_title(title)
    return _save(fig, path)


def render_convergence(path: str, eps: Sequence[float], gaps: Sequence[float],
                       title: str = "gap vs epsilon") -> str:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(eps, gaps, marker="o")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("sup gap")
    ax.set_title(title)
    return _save(fig, path)


def render_trajectory(path: str, field: SpaceTimeField, traj,
                      title: str = "trajectory") -> str:
    plt = _pyplot()
    grid = field.grid
    vals = np.where(field.finite(), field.values, np.nan)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    extent = (grid.x_min, grid.x_max, 0.0, grid.t_final)
    ax.imshow(vals, origin="lower", aspect="auto", extent=extent,
              interpolation="nearest")
    xs = [s[0] for s in traj.samples]
    ts = [s[1] for s in traj.samples]
    ax.plot(xs, ts, color="white", marker=".", markersize=3)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(title)
    return _save(fig, path)
