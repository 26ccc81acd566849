"""CSV and JSON writers.  Output is deterministic given the inputs."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])
    return path


def write_snapshots(path, times: np.ndarray, snapshots: np.ndarray) -> Path:
    """Long format ``(time, site_index, spin)``."""
    rows = ((t, i, int(s)) for t, snap in zip(times, snapshots) for i, s in enumerate(snap))
    return write_rows(path, ["time", "site_index", "spin"], rows)


def write_block_fields(path, times: np.ndarray, fields: np.ndarray) -> Path:
    """Long format ``(time, cell_index, density)``."""
    rows = ((t, i, v) for t, field in zip(times, fields) for i, v in enumerate(field))
    return write_rows(path, ["time", "cell_index", "density"], rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(f"{float(obj):.12g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
