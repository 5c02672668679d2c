"""Tensor completion by alternating low-rank fits with re-imputation.

Two variants share the same EM-style loop: one fits a Tucker model of the
whole tensor, the other fits a truncated SVD of a single unfolding. Both
leave observed entries untouched in the returned tensor and track the
relative fit error on observed entries per iteration; with warm-started
fits that error is nonincreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .factorization import TuckerFactors, deterministic_svd, tucker_decompose
from .tensors import ObservedTensor, fold, matricize
from .validation import check_mask, check_tensor

EM_MAX_ITER = 1000
EM_TOL = 1e-4


def relative_error(truth, estimate, mask=None) -> float:
    """Squared relative error restricted to ``mask``:
    |mask*(truth - estimate)|_F^2 / |mask*truth|_F^2.
    """
    truth = check_tensor(truth, "truth")
    estimate = check_tensor(estimate, "estimate")
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    if mask is None:
        mask = np.ones_like(truth)
    mask = check_mask(mask, truth.shape)
    denom = float(np.sum(mask * truth * truth))
    if denom == 0.0:
        raise ValueError("relative error undefined: masked truth is identically zero")
    num = float(np.sum(mask * (truth - estimate) ** 2))
    return num / denom


@dataclass
class CompletionResult:
    """Outcome of an EM completion run.

    ``error_history[i]`` is the relative fit error on observed entries after
    iteration i+1; ``converged`` is True when the loop stopped because the
    per-iteration decrease fell below tolerance (not by hitting max_iter).
    """

    completed: np.ndarray
    iterations: int
    error_history: list = field(default_factory=list)
    converged: bool = False
    factors: TuckerFactors | None = None


def _as_observed(data, mask):
    if isinstance(data, ObservedTensor):
        return data
    if mask is None:
        return ObservedTensor.from_nan_array(data)
    return ObservedTensor(data=check_tensor(data, "data"), mask=mask)


def _check_em_args(obs: ObservedTensor, max_iter, tol):
    if obs.n_observed == 0:
        raise ValueError("empty mask: no observed entries to fit")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if tol < 0:
        raise ValueError(f"tol must be nonnegative, got {tol}")


def em_tucker(data, ranks, mask=None, max_iter: int = EM_MAX_ITER, tol: float = EM_TOL,
              inner_sweeps: int = 2) -> CompletionResult:
    """Complete a partially observed tensor with an EM / Tucker loop.

    Missing entries start at the mean of the observed ones; each iteration
    fits a Tucker model at ``ranks`` (warm started from the previous
    iteration's factors) and re-imputes the missing entries from the model.
    Stops when the relative fit error on observed entries decreases by less
    than ``tol``, or after ``max_iter`` iterations.

    Order-2 inputs skip the warm start: for a matrix the HOSVD pass already
    gives the exact best approximation, so each iteration matches em_matrix.
    """
    obs = _as_observed(data, mask)
    _check_em_args(obs, max_iter, tol)
    observed = obs.mask == 1.0
    fill = float(obs.data[observed].mean())
    current = np.where(observed, obs.data, fill)

    warm_start = obs.data.ndim > 2
    denom = float(np.sum(obs.data[observed] ** 2))
    history = []
    converged = False
    factors = None
    for it in range(max_iter):
        init = factors.factors if warm_start and factors is not None else None
        factors = tucker_decompose(current, ranks, max_sweeps=inner_sweeps, tol=0.0,
                                   init_factors=init)
        predicted = factors.reconstruction()
        if denom == 0.0:
            err = float(np.sum((obs.data[observed] - predicted[observed]) ** 2))
        else:
            err = float(np.sum((obs.data[observed] - predicted[observed]) ** 2)) / denom
        history.append(err)
        current = np.where(observed, obs.data, predicted)
        if observed.all():
            converged = True
            break
        if len(history) >= 2 and history[-2] - history[-1] < tol:
            converged = True
            break

    return CompletionResult(completed=current, iterations=len(history),
                            error_history=history, converged=converged, factors=factors)


def _truncated_svd_fit(m, rank):
    u, s, vt = deterministic_svd(m)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]


def em_matrix(data, rank: int, mask=None, mode: int = 1, max_iter: int = EM_MAX_ITER,
              tol: float = EM_TOL) -> CompletionResult:
    """Matrix-completion baseline: the same EM loop on a single unfolding,
    with a rank-``rank`` truncated SVD as the per-iteration fit."""
    obs = _as_observed(data, mask)
    _check_em_args(obs, max_iter, tol)
    m = matricize(obs.data, mode)
    m_mask = matricize(obs.mask, mode)
    if rank < 1 or rank > min(m.shape):
        raise ValueError(f"rank must be in [1, {min(m.shape)}], got {rank}")

    observed = m_mask == 1.0
    fill = float(m[observed].mean())
    current = np.where(observed, m, fill)

    denom = float(np.sum(m[observed] ** 2))
    history = []
    converged = False
    for it in range(max_iter):
        predicted = _truncated_svd_fit(current, rank)
        if denom == 0.0:
            err = float(np.sum((m[observed] - predicted[observed]) ** 2))
        else:
            err = float(np.sum((m[observed] - predicted[observed]) ** 2)) / denom
        history.append(err)
        current = np.where(observed, m, predicted)
        if observed.all():
            converged = True
            break
        if len(history) >= 2 and history[-2] - history[-1] < tol:
            converged = True
            break

    completed = fold(current, mode, obs.shape)
    return CompletionResult(completed=completed, iterations=len(history),
                            error_history=history, converged=converged)


class EmTuckerCompleter(BaseEstimator):
    """Estimator-style wrapper around :func:`em_tucker`.

    ``fit(X)`` accepts a NaN-marked array (missing entries NaN) or a clean
    array plus an explicit binary ``mask``. After fitting, ``completed_``
    holds the imputed tensor; ``fit_transform`` returns it.
    """

    def __init__(self, ranks=None, max_iter=EM_MAX_ITER, tol=EM_TOL, inner_sweeps=2):
        self.ranks = ranks
        self.max_iter = max_iter
        self.tol = tol
        self.inner_sweeps = inner_sweeps

    def fit(self, X, y=None, mask=None):
        if self.ranks is None:
            raise ValueError("ranks must be set before fitting")
        result = em_tucker(X, self.ranks, mask=mask, max_iter=self.max_iter,
                           tol=self.tol, inner_sweeps=self.inner_sweeps)
        self.completed_ = result.completed
        self.error_history_ = result.error_history
        self.n_iterations_ = result.iterations
        self.converged_ = result.converged
        self.factors_ = result.factors
        return self

    def fit_transform(self, X, y=None, mask=None):
        return self.fit(X, mask=mask).completed_


class EmMatrixCompleter(BaseEstimator):
    """Estimator-style wrapper around :func:`em_matrix`."""

    def __init__(self, rank=None, mode=1, max_iter=EM_MAX_ITER, tol=EM_TOL):
        self.rank = rank
        self.mode = mode
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None, mask=None):
        if self.rank is None:
            raise ValueError("rank must be set before fitting")
        result = em_matrix(X, self.rank, mask=mask, mode=self.mode,
                           max_iter=self.max_iter, tol=self.tol)
        self.completed_ = result.completed
        self.error_history_ = result.error_history
        self.n_iterations_ = result.iterations
        self.converged_ = result.converged
        return self

    def fit_transform(self, X, y=None, mask=None):
        return self.fit(X, mask=mask).completed_
