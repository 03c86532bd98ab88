"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError, ValidationError


def check_points(points, *, allow_empty: bool = True, name: str = "points") -> np.ndarray:
    """Return ``points`` as a C-contiguous float64 array of shape (n, 3).

    Raises ValidationError on wrong shape or non-finite coordinates.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        if not allow_empty:
            raise ValidationError(f"{name} must be non-empty")
        return np.zeros((0, 3), dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise ValidationError(f"{name} contains a non-finite coordinate at row {bad}")
    return np.ascontiguousarray(arr)


def check_positive(value, name: str) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_threshold(value, name: str) -> float:
    """Thresholds live in (0, 1]."""
    value = float(value)
    if not (0.0 < value <= 1.0):
        raise ConfigurationError(f"{name} must lie in (0, 1], got {value!r}")
    return value


def check_unit_interval(value, name: str) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_rotation(matrix, name: str = "rotation", atol: float = 1e-6) -> np.ndarray:
    R = np.asarray(matrix, dtype=np.float64)
    if R.shape != (3, 3) or not np.isfinite(R).all():
        raise ValidationError(f"{name} must be a finite 3x3 matrix")
    if not np.allclose(R.T @ R, np.eye(3), atol=atol):
        raise ValidationError(f"{name} is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > atol:
        raise ValidationError(f"{name} must have determinant +1")
    return R
