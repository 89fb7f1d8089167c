"""CSV and JSON readers and writers for tick panels, volatility matrices and reports.

Layouts:

* ticks: ``day,s,t,y`` with one row per tick; each day holds ``s = 0..m``.
* volmatrix: header ``day,<t_1>,...,<t_n>`` then one row per day.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError

TICK_COLUMNS = ["day", "s", "t", "y"]


def write_ticks(path, prices) -> None:
    y = np.atleast_2d(np.asarray(prices, dtype=float))
    D, mp1 = y.shape
    m = mp1 - 1
    s = np.tile(np.arange(mp1), D)
    frame = pd.DataFrame({
        "day": np.repeat(np.arange(D), mp1),
        "s": s,
        "t": s / m,
        "y": y.ravel(),
    })
    frame.to_csv(path, index=False, lineterminator="\n")


def read_ticks(path) -> np.ndarray:
    """``D x (m + 1)`` price array; every day must carry the same complete tick index."""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as exc:
        raise DataError(f"tick file not found: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed tick file {path}: {exc}") from exc
    if list(frame.columns) != TICK_COLUMNS:
        raise DataError(f"tick file columns must be {TICK_COLUMNS}, got {list(frame.columns)}")
    if frame.empty:
        raise DataError("tick file has no rows")
    for col in ("day", "s"):
        if not pd.api.types.is_integer_dtype(frame[col]):
            raise DataError(f"column {col!r} must be integer")
    if not np.all(np.isfinite(frame["y"].to_numpy(dtype=float))):
        raise DataError("non-finite prices in tick file")
    frame = frame.sort_values(["day", "s"], kind="mergesort")
    counts = frame.groupby("day")["s"].count()
    if counts.nunique() != 1:
        raise DataError("days have different numbers of ticks")
    mp1 = int(counts.iloc[0])
    if mp1 < 3:
        raise DataError("each day needs at least 3 ticks")
    D = counts.size
    s = frame["s"].to_numpy().reshape(D, mp1)
    if not np.array_equal(s, np.broadcast_to(np.arange(mp1), (D, mp1))):
        raise DataError("tick index s must run 0..m without gaps or duplicates on every day")
    return frame["y"].to_numpy(dtype=float).reshape(D, mp1)


def write_volmatrix(path, matrix, grid=None, days=None) -> None:
    vm = np.atleast_2d(np.asarray(matrix, dtype=float))
    D, n = vm.shape
    grid = np.arange(1, n + 1) / n if grid is None else np.asarray(grid, dtype=float)
    days = np.arange(D) if days is None else np.asarray(days)
    frame = pd.DataFrame(vm, columns=[repr(float(t)) for t in grid])
    frame.insert(0, "day", days)
    frame.to_csv(path, index=False, lineterminator="\n")


def read_volmatrix(path):
    """Returns ``(matrix, grid, days)``."""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as exc:
        raise DataError(f"volatility matrix not found: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed volatility matrix {path}: {exc}") from exc
    if frame.columns[0] != "day" or frame.shape[1] < 3:
        raise DataError("volatility matrix needs a 'day' column and at least 2 grid columns")
    try:
        grid = np.array([float(c) for c in frame.columns[1:]])
    except ValueError as exc:
        raise DataError("grid header entries must be numeric times") from exc
    if np.any(np.diff(grid) <= 0):
        raise DataError("grid times must be increasing")
    try:
        matrix = frame.iloc[:, 1:].to_numpy(dtype=float)
    except ValueError as exc:
        raise DataError("non-numeric volatility entries") from exc
    if not np.all(np.isfinite(matrix)):
        raise DataError("non-finite volatility entries")
    return matrix, grid, frame["day"].to_numpy()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {path}: {exc}") from exc


def write_rows(path, rows, columns) -> None:
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator="\n")


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
