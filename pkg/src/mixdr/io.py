"""Deterministic CSV and JSON readers and writers for datasets and artifacts."""

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import DataError


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def write_dataset(path, X, y):
    X = np.asarray(X, dtype=float)
    header = ["y"] + [f"x{j + 1}" for j in range(X.shape[1])]
    write_csv(path, header, (np.concatenate([[yi], xi]) for yi, xi in zip(y, X)))


def read_dataset(path, outcome="y"):
    """Read a dataset CSV; returns ``(X, y, feature_names)``."""
    path = Path(path)
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path} is empty")
    header = rows[0]
    if outcome not in header:
        raise DataError(f"{path}: no outcome column {outcome!r}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric value ({exc})") from None
    if data.size == 0:
        raise DataError(f"{path} has no data rows")
    if data.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    j = header.index(outcome)
    names = [h for i, h in enumerate(header) if i != j]
    X = np.delete(data, j, axis=1)
    return X, data[:, j], names


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
