"""Snapshot files, time-series CSV and JSON reports.

Snapshot layout::

    MHDSNAP1\\n
    dim nx ny nz t nfields\\n
    rho\\n mx\\n ... bz\\n          (one field name per line)
    <little-endian float64 data, row-major, one block per field>

Unused trailing extents are written as 1.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DataError
from .grid import FluidState, Grid

MAGIC = b"MHDSNAP1\n"
FIELDS = ("rho", "mx", "my", "mz", "eps", "bx", "by", "bz")
CSV_COLUMNS = (
    "t",
    "mass",
    "momx",
    "momy",
    "momz",
    "E_total",
    "S_total",
    "E_ballistic",
    "H_rel",
    "prod_min",
    "divB_max",
    "entropy_residual",
    "rei_lhs",
    "rei_rhs",
    "rei_margin",
    "kp_ratio",
)


def write_snapshot(path, state: FluidState):
    g = state.grid
    dims = list(g.shape) + [1] * (3 - g.dim)
    U = state.stacked()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{g.dim} {dims[0]} {dims[1]} {dims[2]} {state.t!r} {len(FIELDS)}\n".encode())
        for name in FIELDS:
            fh.write(f"{name}\n".encode())
        fh.write(np.ascontiguousarray(U, dtype="<f8").tobytes())


def read_snapshot(path, grid: Grid | None = None):
    """Return ``(t, fields)`` or a :class:`FluidState` when ``grid`` is given."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise DataError(f"{path}: not a snapshot file")
    pos = len(MAGIC)
    end = data.index(b"\n", pos)
    head = data[pos:end].decode().split()
    if len(head) != 6:
        raise DataError(f"{path}: malformed header")
    dim, nx, ny, nz = (int(v) for v in head[:4])
    t, nf = float(head[4]), int(head[5])
    pos = end + 1
    names = []
    for _ in range(nf):
        end = data.index(b"\n", pos)
        names.append(data[pos:end].decode())
        pos = end + 1
    shape = (nx, ny, nz)[:dim]
    n = int(np.prod(shape))
    arr = np.frombuffer(data, dtype="<f8", offset=pos)
    if arr.size != nf * n:
        raise DataError(f"{path}: expected {nf * n} values, found {arr.size}")
    fields = {nm: arr[k * n : (k + 1) * n].reshape(shape).astype(float) for k, nm in enumerate(names)}
    if grid is None:
        return t, fields
    if tuple(grid.shape) != shape:
        raise DataError(f"{path}: grid {shape} does not match {grid.shape}")
    U = np.stack([fields[nm] for nm in FIELDS])
    return FluidState.from_stacked(grid, t, U)


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def write_timeseries(path, rows):
    """Rows are mappings keyed by :data:`CSV_COLUMNS`; missing entries are blank."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])


def read_timeseries(path):
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [{k: (float(v) if v != "" else math.nan) for k, v in row.items()} for row in rd]


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_report(path, report: dict):
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")
    return text


__all__ = [
    "CSV_COLUMNS",
    "FIELDS",
    "MAGIC",
    "read_snapshot",
    "read_timeseries",
    "write_report",
    "write_snapshot",
    "write_table",
    "write_timeseries",
]
