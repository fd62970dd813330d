"""Flat-file formats: measure families, trajectories, FV densities and run manifests."""

from __future__ import annotations

import json
import platform
from pathlib import Path

import numpy as np

from .metrics import MeasureFamily
from .torus import TorusGrid

FAMILY_COLUMNS = "cell_index position weight"


def write_families(path, families, mode: str = "w"):
    """Write one or more families; each block starts with a ``# resolution=.. b=.. t=..`` header."""
    if isinstance(families, MeasureFamily):
        families = [families]
    with open(path, mode) as fh:
        for fam in families:
            fh.write(f"# resolution={fam.grid.resolution} b={float(fam.b)!r} t={float(fam.time)!r}\n")
            fh.write(f"# {FAMILY_COLUMNS}\n")
            for i, (p, w) in enumerate(zip(fam.positions, fam.weights)):
                for pos, wt in zip(np.asarray(p, dtype=float), np.asarray(w, dtype=float)):
                    fh.write(f"{i} {pos:.17g} {wt:.17g}\n")


def _parse_header(line):
    fields = dict(tok.split("=", 1) for tok in line.lstrip("#").split())
    return int(fields["resolution"]), float(fields["b"]), float(fields["t"])


def read_families(path):
    blocks = []
    cur = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "resolution=" in line:
                    cur = {"head": _parse_header(line), "rows": []}
                    blocks.append(cur)
                continue
            if cur is None:
                raise ValueError(f"{path}: data row before any family header")
            cur["rows"].append(line.split())
    fams = []
    for blk in blocks:
        n, b, t = blk["head"]
        rows = np.array(blk["rows"], dtype=float).reshape(-1, 3)
        idx = rows[:, 0].astype(int)
        if np.any((idx < 0) | (idx >= n)):
            raise ValueError(f"{path}: cell index out of range for resolution {n}")
        pos = [rows[idx == i, 1] for i in range(n)]
        wts = [rows[idx == i, 2] for i in range(n)]
        fams.append(MeasureFamily(TorusGrid(n), pos, wts, b, t))
    if not fams:
        raise ValueError(f"{path}: no measure family found")
    return fams


def read_family(path) -> MeasureFamily:
    return read_families(path)[0]


def write_trajectory(path, times, phases):
    """Rows ``t i u_i`` for a single run (phases of shape ``(stamps, N)``)."""
    phases = np.asarray(phases)
    S, N = phases.shape
    t = np.repeat(np.asarray(times, dtype=float), N)
    i = np.tile(np.arange(N), S)
    np.savetxt(path, np.column_stack([t, i, phases.reshape(-1)]), fmt=["%.10g", "%d", "%.17g"],
               header="t i u_i")


def read_trajectory(path):
    data = np.loadtxt(path, ndmin=2)
    times = np.unique(data[:, 0])
    N = int(data[:, 1].max()) + 1
    return times, data[:, 2].reshape(times.size, N)


def write_fv(path, times, density):
    """Rows ``t x_cell u_cell value`` for a ``(stamps, F, U)`` density array."""
    density = np.asarray(density)
    S, F, U = density.shape
    t = np.repeat(np.asarray(times, dtype=float), F * U)
    x = np.tile(np.repeat(np.arange(F), U), S)
    u = np.tile(np.arange(U), S * F)
    np.savetxt(path, np.column_stack([t, x, u, density.reshape(-1)]), fmt=["%.10g", "%d", "%d", "%.17g"],
               header="t x_cell u_cell value")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def environment() -> dict:
    import numba
    import scipy

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__}


def write_manifest(path, manifest: dict):
    data = dict(manifest)
    data.setdefault("environment", environment())
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
