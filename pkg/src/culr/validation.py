"""Small input-validation helpers used by the estimators and matrix types."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def as_float_matrix(value, name: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise DataError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def check_square(matrix: np.ndarray, name: str) -> np.ndarray:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DataError(f"{name} must be square, got shape {matrix.shape}")
    return matrix


def check_row_stochastic(matrix: np.ndarray, name: str, tol: float = 1e-9) -> None:
    if np.any(matrix < -tol) or np.any(matrix > 1 + tol):
        raise DataError(f"{name} has entries outside [0, 1]")
    sums = matrix.sum(axis=1)
    worst = float(np.max(np.abs(sums - 1.0))) if len(sums) else 0.0
    if worst > tol:
        raise DataError(f"{name} rows must sum to 1 (worst deviation {worst:.3g})")


def check_distribution(row: np.ndarray, name: str, tol: float = 1e-6) -> None:
    if np.any(row < -tol):
        raise DataError(f"{name} has negative probabilities")
    total = float(row.sum())
    if abs(total - 1.0) > tol:
        raise DataError(f"{name} must sum to 1, got {total!r}")


def check_ratios(ratios, tol: float = 1e-9) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise DataError("expected three split ratios (train, val, test)")
    r = tuple(float(x) for x in ratios)
    if any(x < 0 for x in r):
        raise DataError(f"split ratios must be non-negative, got {r}")
    if abs(sum(r) - 1.0) > tol:
        raise DataError(f"split ratios must sum to 1, got {sum(r)!r}")
    return r


def check_seed(seed) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise DataError(f"seed must be an integer, got {seed!r}")
    return int(seed)
