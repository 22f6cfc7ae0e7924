"""Input validation helpers shared across the package."""

import numpy as np


def as_float_vector(x, name="array"):
    """Coerce to a 1-D float64 array and require finite entries."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_float_matrix(x, name="matrix"):
    """Coerce to a 2-D float64 array and require finite entries."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_consistent_length(*arrays, **named):
    items = list(enumerate(arrays)) + list(named.items())
    lengths = {len(a) for _, a in items}
    if len(lengths) > 1:
        detail = ", ".join(f"{name}: {len(a)}" for name, a in items)
        raise ValueError(f"inconsistent lengths ({detail})")
