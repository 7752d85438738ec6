"""Byte-stable CSV and JSON writers.

Floats go to CSV with 17 significant digits, which round-trips every
double exactly.  JSON uses Python's shortest round-trip float repr; infinite
values become the strings ``"+inf"`` / ``"-inf"`` and NaN becomes ``"nan"``.
Files are written to a temporary sibling and renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def fmt_real(v) -> str:
    return format(float(v), ".17g")


# ----------------------------------------------------------------------------
# trajectories


def trajectory_csv_text(states, start_step: int = 0) -> str:
    states = np.asarray(states, dtype=float)
    m = states.shape[1]
    lines = ["step," + ",".join(f"agent_{i}" for i in range(m))]
    for k, row in enumerate(states):
        lines.append(f"{start_step + k}," + ",".join(fmt_real(v) for v in row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(path, trajectory) -> Path:
    return atomic_write_text(path, trajectory_csv_text(trajectory.states, trajectory.start_step))


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(steps, states)`` from a trajectory CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "step" or header[1:] != [f"agent_{i}" for i in range(len(header) - 1)]:
        raise ValueError(f"unexpected trajectory header {header[:3]}...")
    steps = np.array([int(r[0]) for r in body], dtype=np.int64)
    states = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
    return steps, states


# ----------------------------------------------------------------------------
# tables


def rows_csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_real(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_rows_csv(path, header, rows) -> Path:
    return atomic_write_text(path, rows_csv_text(header, rows))


# ----------------------------------------------------------------------------
# JSON


def jsonable(obj):
    """Convert reports, arrays and numpy scalars to plain JSON values."""
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "+inf" if v > 0 else "-inf"
        return v
    return obj


def json_text(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json_text(obj))


def read_json(path):
    return json.loads(Path(path).read_text())
