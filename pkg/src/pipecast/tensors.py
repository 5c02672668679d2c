"""Dense tensor algebra: matricization, folding, mode products, masks.

Conventions used throughout the package:

* tensors are plain float64 ndarrays of order 1 through 8;
* modes are numbered 1..N (matching the usual tensor literature);
* ``matricize(t, m)`` puts mode ``m`` on the rows and enumerates the
  remaining modes in increasing mode order with the *last* remaining mode
  varying fastest (C order), so for a fully C-contiguous tensor
  ``matricize(t, 1)`` is just ``t.reshape(t.shape[0], -1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import as_float_array, check_mask, check_mode, check_tensor


@dataclass
class ObservedTensor:
    """A partially observed tensor: dense data plus a binary mask.

    ``data`` holds arbitrary (finite) values at unobserved positions; only
    entries with ``mask == 1`` are meaningful.
    """

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.data = check_tensor(self.data, "data")
        self.mask = check_mask(self.mask, self.data.shape)

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    @property
    def missing_ratio(self) -> float:
        return 1.0 - self.mask.sum() / self.mask.size

    @classmethod
    def from_nan_array(cls, values) -> "ObservedTensor":
        """Build from an array whose missing entries are NaN."""
        arr = np.asarray(values, dtype=np.float64)
        mask = np.isfinite(arr).astype(np.float64)
        data = np.where(mask == 1.0, arr, 0.0)
        return cls(data=data, mask=mask)

    def to_nan_array(self) -> np.ndarray:
        out = self.data.copy()
        out[self.mask == 0.0] = np.nan
        return out


def matricize(t, mode: int) -> np.ndarray:
    """Unfold a tensor along ``mode`` (1-based) into a matrix.

    Row i of the result is the slice of ``t`` with index i along ``mode``;
    columns enumerate the remaining modes in increasing order with the last
    one varying fastest.
    """
    t = check_tensor(t)
    mode = check_mode(mode, t.ndim)
    return np.ascontiguousarray(np.moveaxis(t, mode - 1, 0).reshape(t.shape[mode - 1], -1))


def fold(m, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`matricize`: rebuild the tensor of ``shape``."""
    m = as_float_array(m, "matrix")
    shape = tuple(int(d) for d in shape)
    mode = check_mode(mode, len(shape))
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got order {m.ndim}")
    rest = shape[: mode - 1] + shape[mode:]
    expected = (shape[mode - 1], int(np.prod(rest)) if rest else 1)
    if m.shape != expected:
        raise ValueError(f"matrix shape {m.shape} does not fold into {shape} along mode {mode}")
    return np.ascontiguousarray(np.moveaxis(m.reshape((shape[mode - 1],) + rest), 0, mode - 1))


def mode_product(t, u, mode: int) -> np.ndarray:
    """Multiply ``t`` along ``mode`` by the matrix ``u`` (u @ unfolding)."""
    t = check_tensor(t)
    u = as_float_array(u, "factor")
    mode = check_mode(mode, t.ndim)
    if u.ndim != 2:
        raise ValueError(f"factor must be a matrix, got order {u.ndim}")
    if u.shape[1] != t.shape[mode - 1]:
        raise ValueError(
            f"factor has {u.shape[1]} columns but mode {mode} has extent {t.shape[mode - 1]}"
        )
    out = np.tensordot(u, t, axes=([1], [mode - 1]))
    return np.ascontiguousarray(np.moveaxis(out, 0, mode - 1))


def multi_mode_product(t, factors, skip: int = 0) -> np.ndarray:
    """Apply one matrix per mode (``factors[i]`` along mode ``i+1``).

    ``skip`` (1-based, 0 for none) leaves that mode untouched; its factor
    entry is ignored and may be None.
    """
    out = t
    for i, u in enumerate(factors):
        if i + 1 == skip or u is None:
            continue
        out = mode_product(out, u, i + 1)
    return out


def frobenius_norm(t) -> float:
    t = as_float_array(t, "tensor")
    return float(np.sqrt(np.sum(t * t)))


def masked_values(t, mask) -> np.ndarray:
    """Entries of ``t`` where ``mask == 1``, flattened in C order."""
    t = check_tensor(t)
    mask = check_mask(mask, t.shape)
    return t[mask == 1.0]


def dof_counts(extent: int, order: int, rank: int) -> tuple[int, int, int]:
    """Degree-of-freedom counts for three models of an order-``order`` cubic
    tensor with every extent ``extent``, at multilinear/matrix rank ``rank``.

    Returns ``(tucker, matrix_one_mode, matrix_paired_modes)``:

    * Tucker with every rank equal: r^n + n(rI - r^2) (orthonormal factors,
      Grassmannian dimension r(I - r) each, plus the core);
    * rank-r factorization of the mode-1 unfolding: (I + I^(n-1) - r) r;
    * rank-r factorization of an unfolding that pairs two modes against the
      rest: I^(n-2) (2rI - r^2).
    """
    if order < 2:
        raise ValueError(f"order must be >= 2, got {order}")
    if rank < 1 or rank > extent:
        raise ValueError(f"rank must be in [1, {extent}], got {rank}")
    i, n, r = int(extent), int(order), int(rank)
    tucker = r**n + n * (r * i - r * r)
    matrix_single = (i + i ** (n - 1) - r) * r
    matrix_paired = i ** (n - 2) * (2 * r * i - r * r)
    return tucker, matrix_single, matrix_paired
