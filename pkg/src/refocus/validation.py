"""Small input-validation helpers shared by the estimator classes."""
from __future__ import annotations

import numpy as np

__all__ = ["check_positive", "check_finite_array", "check_in", "check_instance"]


def check_positive(name: str, value: float, strict: bool = True) -> float:
    value = float(value)
    if strict and not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and not value >= 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def check_finite_array(name: str, a, dtype=None) -> np.ndarray:
    arr = np.asarray(a, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr


def check_in(name: str, value, allowed) -> object:
    if value not in allowed:
        raise ValueError(f"{name} must be one of {sorted(allowed)}, got {value!r}")
    return value


def check_instance(name: str, value, cls) -> object:
    if not isinstance(value, cls):
        raise TypeError(f"{name} must be a {cls.__name__}, got {type(value).__name__}")
    return value
