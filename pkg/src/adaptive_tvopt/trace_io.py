"""Trace serialization.

CSV columns, in order: ``t``, ``x_<agent>_<coord>``, ``v_<agent>_<coord>``
(second-order runs only), ``xstar_<coord>``, ``tracking_error``,
``consensus_error``, ``estimator_error``, ``V``, ``W``. Agents and
coordinates are 1-based. Values are written with 17 significant digits;
quantities that do not apply to a run are written as ``nan``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

ERROR_COLUMNS = ("tracking_error", "consensus_error", "estimator_error", "V", "W")


def columns_for(n: int, m: int, second_order: bool) -> list[str]:
    cols = ["t"]
    cols += [f"x_{i + 1}_{k + 1}" for i in range(n) for k in range(m)]
    if second_order:
        cols += [f"v_{i + 1}_{k + 1}" for i in range(n) for k in range(m)]
    cols += [f"xstar_{k + 1}" for k in range(m)]
    cols += list(ERROR_COLUMNS)
    return cols


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def trace_rows(trace):
    first = trace[0]
    n, m = first.x.shape
    second_order = first.v is not None
    header = columns_for(n, m, second_order)
    rows = []
    for r in trace:
        row = [r.t, *r.x.ravel()]
        if second_order:
            row += list(r.v.ravel())
        row += list(np.asarray(r.x_star).ravel())
        row += [r.tracking_error, r.consensus_error, r.estimator_error, r.V, r.W]
        rows.append(row)
    return header, rows


def write_csv(trace, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header, rows = trace_rows(trace)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Column name -> values."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty trace file") from None
        data = np.array([[float(v) for v in row] for row in reader if row])
    if data.size == 0:
        return {name: np.array([]) for name in header}
    return {name: data[:, k] for k, name in enumerate(header)}


def write_npz(trace, path, config: dict) -> Path:
    """Binary trace with the estimates and an embedded copy of the config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header, rows = trace_rows(trace)
    arrays = {"columns": np.array(header), "data": np.array(rows, dtype=float)}
    for name in trace[0].estimates:
        arrays[f"est_{name}"] = np.array([r.estimates[name] for r in trace])
    arrays["config_json"] = np.array(json.dumps(config, sort_keys=True))
    np.savez_compressed(path, **arrays)
    return path


def read_npz(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as z:
        cols = [str(c) for c in z["columns"]]
        data = z["data"]
        config = json.loads(str(z["config_json"]))
        table = {name: data[:, k] for k, name in enumerate(cols)}
        for key in z.files:
            if key.startswith("est_"):
                table[key] = z[key]
    return table, config
