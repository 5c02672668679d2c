"""Pipeline runtime prediction from dataset size.

One model per pipeline: least squares over all monomials of total degree at
most three in (n_points, n_features, log n_points, log n_features). Columns
of the design matrix are scaled to unit norm before solving so the wildly
different magnitudes of n^3 and log-terms do not poison the normal
equations. Predictions are floored at a millisecond.
"""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np
from sklearn.base import BaseEstimator

from .validation import check_vector

RUNTIME_FLOOR = 1e-3
_DEGREE = 3


def _monomial_exponents():
    """Exponent tuples over (n, p, log n, log p), total degree <= 3,
    deterministic order (by degree, then lexicographic)."""
    exps = [(0, 0, 0, 0)]
    for degree in range(1, _DEGREE + 1):
        for combo in combinations_with_replacement(range(4), degree):
            e = [0, 0, 0, 0]
            for v in combo:
                e[v] += 1
            exps.append(tuple(e))
    return sorted(set(exps), key=lambda e: (sum(e), e))


MONOMIAL_EXPONENTS = _monomial_exponents()


def runtime_features(sizes) -> np.ndarray:
    """Feature matrix for rows of (n_points, n_features)."""
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.ndim == 1:
        sizes = sizes[None, :]
    if sizes.ndim != 2 or sizes.shape[1] != 2:
        raise ValueError(f"sizes must be (n_obs, 2), got {sizes.shape}")
    if np.any(sizes < 1):
        raise ValueError("dataset sizes must be >= 1")
    n, p = sizes[:, 0], sizes[:, 1]
    base = np.column_stack([n, p, np.log(n), np.log(p)])
    cols = []
    for e in MONOMIAL_EXPONENTS:
        col = np.ones(sizes.shape[0])
        for v, power in enumerate(e):
            if power:
                col = col * base[:, v] ** power
        cols.append(col)
    return np.column_stack(cols)


class RuntimeModel(BaseEstimator):
    """Polynomial runtime model for a single pipeline.

    ``fit(sizes, seconds)`` takes an (n_obs, 2) array of
    (n_points, n_features) rows and observed runtimes in seconds;
    ``predict(sizes)`` returns seconds, floored at ``floor``.
    """

    def __init__(self, floor=RUNTIME_FLOOR):
        self.floor = floor

    def fit(self, X, y):
        features = runtime_features(X)
        y = check_vector(np.asarray(y, dtype=np.float64), "seconds")
        if y.size != features.shape[0]:
            raise ValueError(f"got {y.size} runtimes for {features.shape[0]} size rows")
        if y.size == 0:
            raise ValueError("need at least one runtime observation")
        if np.any(y <= 0):
            raise ValueError("observed runtimes must be positive")
        scales = np.linalg.norm(features, axis=0)
        scales[scales == 0.0] = 1.0
        coef, _, _, _ = np.linalg.lstsq(features / scales[None, :], y, rcond=None)
        self.coefficients_ = coef / scales
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "coefficients_"):
            raise ValueError("model is not fitted")
        features = runtime_features(X)
        return np.maximum(features @ self.coefficients_, self.floor)

    def predict_one(self, n_points: int, n_features: int) -> float:
        return float(self.predict(np.array([[n_points, n_features]]))[0])


def fit_runtime_models(runtimes, dataset_sizes, mask=None) -> list:
    """One fitted RuntimeModel per pipeline column.

    ``runtimes`` is (n_datasets, n_pipelines); ``dataset_sizes`` is
    (n_datasets, 2). ``mask`` (same shape as runtimes) marks which runs were
    observed; unobserved rows are dropped per pipeline. A pipeline with no
    observations gets None.
    """
    runtimes = np.asarray(runtimes, dtype=np.float64)
    sizes = np.asarray(dataset_sizes, dtype=np.float64)
    if runtimes.ndim != 2:
        raise ValueError(f"runtimes must be 2-d, got order {runtimes.ndim}")
    if sizes.shape != (runtimes.shape[0], 2):
        raise ValueError(f"dataset_sizes must be ({runtimes.shape[0]}, 2), got {sizes.shape}")
    if mask is None:
        mask = np.ones_like(runtimes)
    models = []
    for j in range(runtimes.shape[1]):
        keep = mask[:, j] == 1.0
        if not keep.any():
            models.append(None)
            continue
        models.append(RuntimeModel().fit(sizes[keep], runtimes[keep, j]))
    return models


def within_factor_accuracy(truth, predicted, factor: float) -> float:
    """Fraction of predictions within a multiplicative ``factor`` of truth."""
    truth = check_vector(np.asarray(truth, dtype=np.float64), "truth")
    predicted = check_vector(np.asarray(predicted, dtype=np.float64), "predicted")
    if truth.size != predicted.size:
        raise ValueError(f"length mismatch: {truth.size} vs {predicted.size}")
    if truth.size == 0:
        raise ValueError("need at least one pair")
    if np.any(truth <= 0) or np.any(predicted <= 0):
        raise ValueError("runtimes must be positive")
    if factor <= 1.0:
        raise ValueError(f"factor must be > 1, got {factor}")
    ratio = np.maximum(truth / predicted, predicted / truth)
    return float(np.mean(ratio <= factor))
