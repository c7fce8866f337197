"""JSON and CSV helpers shared by the command-line tools.

Matrix files use ``{"d": int, "n": int, "rows": [[...], ...]}`` (row-major).
Point files are either a bare list of numbers or ``{"point": [...]}``.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError


def load_json(path) -> dict | list:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(obj, path=None, indent: int = 2) -> str:
    text = json.dumps(obj, indent=indent, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def matrix_to_json(A, d: int, n: int = 0) -> dict:
    A = np.asarray(A, dtype=float)
    return {"d": int(d), "n": int(n), "rows": A.tolist()}


def matrix_from_json(obj) -> tuple[np.ndarray, int, int]:
    """Return ``(A, d, n)``; the matrix must be square of size 2d+n or 2d."""
    try:
        d, n, rows = int(obj["d"]), int(obj.get("n", 0)), obj["rows"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"matrix JSON needs keys d, n, rows: {exc}") from None
    A = np.asarray(rows, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"matrix rows must form a square array, got shape {A.shape}")
    if A.shape[0] not in (2 * d, 2 * d + n):
        raise DimensionError(f"matrix of size {A.shape[0]} does not match d = {d}, n = {n}")
    return A, d, n


def read_matrix(path) -> tuple[np.ndarray, int, int]:
    return matrix_from_json(load_json(path))


def write_matrix(path, A, d: int, n: int = 0) -> None:
    dump_json(matrix_to_json(A, d, n), path)


def read_point(path, dim: int | None = None) -> np.ndarray:
    obj = load_json(path)
    if isinstance(obj, dict):
        obj = obj.get("point", obj.get("x"))
    x = np.asarray(obj, dtype=float).reshape(-1)
    if dim is not None and x.size != dim:
        raise DimensionError(f"point has {x.size} coordinates, expected {dim}")
    return x


def coordinate_names(d: int, n: int = 0) -> list[str]:
    return [f"x{i}" for i in range(1, d + 1)] + [f"y{i}" for i in range(1, d + 1)] + [f"z{i}" for i in range(1, n + 1)]


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def write_trajectory_csv(path, times, states, energies, d: int, n: int = 0) -> None:
    """Columns ``t, x1.., y1.., z1.., H``."""
    rows = np.column_stack([times, states, energies])
    write_csv(path, ["t", *coordinate_names(d, n), "H"], rows)
