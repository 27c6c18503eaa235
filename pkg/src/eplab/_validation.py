"""Input checks shared by the estimators and the free functions."""
import numbers

import numpy as np

from .exceptions import InvalidFieldError


def check_finite_array(values, name="values"):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidFieldError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidFieldError(f"{name} contains NaN or Inf")
    return arr


def check_scalar(value, name, *, positive=False, nonnegative=False, integer=False):
    if integer:
        if not isinstance(value, numbers.Integral) or isinstance(value, bool):
            raise ValueError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    else:
        if not isinstance(value, numbers.Real) or isinstance(value, bool):
            raise ValueError(f"{name} must be a real number, got {value!r}")
        value = float(value)
        if not np.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")
    if positive and not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    if nonnegative and not value >= 0:
        raise ValueError(f"{name} must be nonnegative, got {value!r}")
    return value


def check_same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise InvalidFieldError(
                f"fields live on different grids (n={grid.n} vs n={f.grid.n})"
            )
    return grid


def check_time_series(times, values):
    t = check_finite_array(times, "times")
    v = np.asarray(values, dtype=float)
    if v.shape != t.shape:
        raise ValueError(f"times and values differ in length: {t.shape} vs {v.shape}")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    return t, v
