"""Shared input-validation helpers.

Every public entry point funnels array arguments through these so error
messages stay uniform and the numeric code can assume clean float64 input.
"""

from __future__ import annotations

import numpy as np

MAX_ORDER = 8


def as_float_array(x, name="array"):
    """Coerce to a C-contiguous float64 ndarray, rejecting non-finite entries."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_tensor(values, name="tensor"):
    """Validate a dense tensor: order in [1, 8], every extent >= 1, finite."""
    arr = as_float_array(values, name)
    if arr.ndim < 1 or arr.ndim > MAX_ORDER:
        raise ValueError(f"{name} order must be in [1, {MAX_ORDER}], got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"{name} has an empty mode: shape {arr.shape}")
    return arr


def check_mode(mode, order):
    """Validate a 1-based mode index against a tensor order."""
    if not isinstance(mode, (int, np.integer)):
        raise ValueError(f"mode must be an integer, got {type(mode).__name__}")
    if mode < 1 or mode > order:
        raise ValueError(f"mode must be in [1, {order}], got {mode}")
    return int(mode)


def check_mask(mask, shape, name="mask"):
    """Validate a binary observation mask of the given shape."""
    arr = np.ascontiguousarray(mask, dtype=np.float64)
    if arr.shape != tuple(shape):
        raise ValueError(f"{name} shape {arr.shape} does not match data shape {tuple(shape)}")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError(f"{name} must be binary (0/1 entries only)")
    return arr


def check_matrix(values, name="matrix"):
    arr = as_float_array(values, name)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got order {arr.ndim}")
    return arr


def check_vector(values, name="vector"):
    arr = as_float_array(values, name)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got order {arr.ndim}")
    return arr


def check_positive_scalar(x, name="value", strict=True):
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x}")
    if strict and x <= 0:
        raise ValueError(f"{name} must be positive, got {x}")
    if not strict and x < 0:
        raise ValueError(f"{name} must be nonnegative, got {x}")
    return x


def check_rank(rank, limit, name="rank"):
    if not isinstance(rank, (int, np.integer)):
        raise ValueError(f"{name} must be an integer, got {type(rank).__name__}")
    if rank < 1 or rank > limit:
        raise ValueError(f"{name} must be in [1, {limit}], got {rank}")
    return int(rank)


def check_index_list(indices, n, name="indices", allow_empty=False):
    """Validate a list of column indices into [0, n)."""
    out = []
    for i in indices:
        if not isinstance(i, (int, np.integer)):
            raise ValueError(f"{name} must contain integers, got {type(i).__name__}")
        if i < 0 or i >= n:
            raise ValueError(f"{name} entry {i} out of range [0, {n})")
        out.append(int(i))
    if not allow_empty and len(out) == 0:
        raise ValueError(f"{name} must not be empty")
    return out
