"""Plain-text tables, CSV/JSON writers and atomic file replacement."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .curve import ArcGrid, Frame, CurvaturePair, SampledCurve

__all__ = ["read_table", "grid_of", "read_curve", "read_curvatures", "frame_table",
           "format_table", "write_table", "atomic_write", "to_jsonable", "dumps_json", "FRAME_COLUMNS"]

FRAME_COLUMNS = ("s", "T_x", "T_y", "T_z", "M1_x", "M1_y", "M1_z", "M2_x", "M2_y", "M2_z",
                 "k1", "k2", "kappa")


def read_table(path) -> np.ndarray:
    """Numeric table, whitespace or comma separated, '#' comments allowed."""
    text = Path(path).read_text().replace(",", " ")
    data = np.loadtxt(io.StringIO(text), comments="#", ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: empty table")
    return data


def grid_of(s: np.ndarray, rtol: float = 1e-6) -> ArcGrid:
    """The uniform ArcGrid matching an arc-length column; rejects uneven spacing."""
    s = np.asarray(s, dtype=float)
    if s.size < 3:
        raise ValueError("need at least 3 nodes")
    g = ArcGrid(float(s[0]), float(s[-1]), s.size)
    if np.max(np.abs(s - g.nodes)) > rtol * g.ds:
        raise ValueError("arc-length column is not uniformly spaced")
    return g


def read_curve(path) -> SampledCurve:
    """Rows s, x, y[, z] of a unit-speed curve."""
    d = read_table(path)
    if d.shape[1] not in (3, 4):
        raise ValueError(f"{path}: expected columns s, x, y[, z], got {d.shape[1]}")
    return SampledCurve(grid_of(d[:, 0]), d[:, 1:])


def read_curvatures(path) -> tuple[ArcGrid, np.ndarray, np.ndarray, np.ndarray | None]:
    """Rows s, k1, k2[, theta]; returns (grid, k1, k2, theta or None)."""
    d = read_table(path)
    if d.shape[1] not in (3, 4):
        raise ValueError(f"{path}: expected columns s, k1, k2[, theta], got {d.shape[1]}")
    theta = d[:, 3] if d.shape[1] == 4 else None
    return grid_of(d[:, 0]), d[:, 1], d[:, 2], theta


def frame_table(grid: ArcGrid, frame: Frame, pair: CurvaturePair) -> np.ndarray:
    return np.column_stack([grid.nodes, frame.T, frame.M1, frame.M2, pair.k1, pair.k2,
                            pair.kappa])


def atomic_write(path, content: str | bytes) -> Path:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        mode = "wb" if isinstance(content, bytes) else "w"
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)  # shortest round-trip form: reruns compare bitwise
    return str(v)


def format_table(columns, rows) -> str:
    """CSV with a header; ``rows`` are dicts (missing keys left empty) or sequences."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        vals = [r.get(c) for c in columns] if isinstance(r, dict) else list(r)
        w.writerow([_cell(float(v) if isinstance(v, np.floating) else v) for v in vals])
    return buf.getvalue()


def write_table(path, columns, rows) -> Path:
    return atomic_write(path, format_table(columns, rows))


def to_jsonable(obj):
    """Recursively convert numpy values; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2) + "\n"
