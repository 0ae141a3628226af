"""Writers for force histories, field snapshots and summaries."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..grid import cell_centered


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_force_history(path, history):
    arr = history.as_array()
    np.savetxt(path, arr, delimiter=",", header="t,Fx,Fy,Cd,Cl", comments="", fmt="%.12e")


def read_force_history(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_snapshot(directory, step, state, ops, fmt="csv") -> Path:
    """Cell-centred ``ux, uy, p, vorticity`` of ``state``.

    CSV files start with ``#`` header lines holding the grid size and time.
    """
    uc, vc, p, wc = cell_centered(state.u, state.p, ops)
    g = ops.grid
    directory = Path(directory)
    if fmt == "npy":
        path = directory / f"fields_{step}.npz"
        np.savez(path, nx=g.nx, ny=g.ny, t=state.t, ux=uc, uy=vc, p=p, vorticity=wc)
        return path
    j, i = np.divmod(np.arange(g.nx * g.ny), g.nx)
    table = np.column_stack([i, j, uc.ravel(), vc.ravel(), p.ravel(), wc.ravel()])
    path = directory / f"fields_{step}.csv"
    header = f"# nx={g.nx} ny={g.ny} hx={g.hx:.12g} hy={g.hy:.12g} t={state.t:.12g}\ni,j,ux,uy,p,vorticity"
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=["%d", "%d"] + ["%.10e"] * 4)
    return path


def read_snapshot(path):
    """Returns ``(meta, table)`` for a CSV snapshot."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().lstrip("#").split()
    meta = {k: float(v) for k, v in (item.split("=") for item in first)}
    return meta, np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)


def write_normalized_thrust(path, t, thrust, normalized):
    np.savetxt(path, np.column_stack([t, thrust, normalized]), delimiter=",",
               header="t,thrust,normalized", comments="", fmt="%.12e")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_summary(path, summary: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
