"""Lightweight input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_float_matrix(x, name: str, dtype=np.float64) -> np.ndarray:
    """Coerce to a 2-D float array, rejecting anything else."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_coords(x, name: str = "coords") -> np.ndarray:
    """Coerce to an (L, 3) integer coordinate array."""
    arr = np.asarray(x)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int32)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (L, 3), got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.array_equal(rounded, arr):
            raise ValueError(f"{name} must be integer-valued")
        arr = rounded
    return arr.astype(np.int32)


def as_labels(x, name: str = "labels") -> np.ndarray:
    """Coerce to a 1-D int32 label vector."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must be integer-valued")
    return arr.astype(np.int32)


def check_positive_int(value, name: str) -> int:
    value = int(value)
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")
    return value


def check_unit_interval(value, name: str) -> float:
    """Thresholds live in (0, 1]."""
    value = float(value)
    if not (0.0 < value <= 1.0):
        raise ValueError(f"{name} must lie in (0, 1], got {value}")
    return value
