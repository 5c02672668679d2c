"""Budgeted selection of informative pipelines via greedy D-optimal design.

Candidates are embedding columns y_j with predicted runtimes t_j. Greedy
selection maximizes log det(sum_{j in S} y_j y_j^T), using the determinant
lemma det(X + y y^T) = det(X)(1 + y^T X^-1 y) for payoffs and
Sherman-Morrison for O(k^2) inverse updates. The time-constrained variant
picks by payoff per unit predicted runtime and never exceeds the budget;
the initialization uses column-pivoted QR restricted to cheap-enough
candidates, with a cheapest-first fallback when too few qualify.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .validation import check_index_list, check_matrix, check_positive_scalar, check_vector


@dataclass
class DesignPool:
    """Candidate columns for experiment design.

    ``weights``, when given, are per-column noise scales sigma_j; the
    weighted variants work on rescaled columns y_j / sigma_j. Zero columns
    are kept in the pool but never selectable.
    """

    embeddings: np.ndarray
    runtimes: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.embeddings = check_matrix(self.embeddings, "embeddings")
        self.runtimes = check_vector(self.runtimes, "runtimes")
        if self.runtimes.size != self.embeddings.shape[1]:
            raise ValueError(
                f"got {self.runtimes.size} runtimes for {self.embeddings.shape[1]} columns"
            )
        if np.any(self.runtimes <= 0):
            raise ValueError("predicted runtimes must be positive")
        if self.weights is not None:
            self.weights = check_vector(self.weights, "weights")
            if self.weights.size != self.embeddings.shape[1]:
                raise ValueError(
                    f"got {self.weights.size} weights for {self.embeddings.shape[1]} columns"
                )
            if np.any(self.weights <= 0):
                raise ValueError("weights must be positive")

    @property
    def n_columns(self) -> int:
        return self.embeddings.shape[1]

    @property
    def selectable(self) -> np.ndarray:
        return np.linalg.norm(self.embeddings, axis=0) > 0.0

    def rescaled_by_weights(self) -> "DesignPool":
        """Pool with columns divided by their noise scales (weights)."""
        if self.weights is None:
            raise ValueError("pool has no weights to rescale by")
        return DesignPool(embeddings=self.embeddings / self.weights[None, :],
                          runtimes=self.runtimes.copy())


@dataclass
class DesignState:
    """Incrementally maintained greedy state: selected indices, the inverse
    of X = sum of selected outer products, and log det X."""

    selected: list
    x_inv: np.ndarray
    logdet: float


def init_design(pool: DesignPool, indices, ridge: float = 0.0) -> DesignState:
    """Start a greedy design from an index set whose Gram matrix is
    nonsingular (e.g. the QR initialization).

    ``ridge`` adds epsilon*I to the Fisher matrix, which makes short or
    rank-deficient starts usable: unexplored directions then carry payoffs
    of order 1/epsilon and dominate the greedy choice.
    """
    indices = check_index_list(indices, pool.n_columns, "init indices")
    if len(set(indices)) != len(indices):
        raise ValueError("init indices contain duplicates")
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    y = pool.embeddings[:, indices]
    k = pool.embeddings.shape[0]
    x = y @ y.T + ridge * np.eye(k)
    sign, logdet = np.linalg.slogdet(x)
    if sign <= 0 or not np.isfinite(logdet):
        raise ValueError(
            "initial design is singular; seed it with qr_init or pass ridge > 0")
    return DesignState(selected=list(indices), x_inv=np.linalg.inv(x), logdet=float(logdet))


def design_payoff(state: DesignState, y) -> float:
    """Log-determinant gain factor of adding column y: y^T X^-1 y
    (log det increases by log(1 + payoff))."""
    y = check_vector(y, "design column")
    return float(y @ state.x_inv @ y)


def add_to_design(state: DesignState, pool: DesignPool, j: int) -> None:
    """Add column j to the design, updating the inverse and logdet in place."""
    j = check_index_list([j], pool.n_columns, "index")[0]
    y = pool.embeddings[:, j]
    payoff = design_payoff(state, y)
    u = state.x_inv @ y
    state.x_inv = state.x_inv - np.outer(u, u) / (1.0 + payoff)
    state.logdet += float(np.log1p(payoff))
    state.selected.append(j)


def _candidate_payoffs(state: DesignState, pool: DesignPool, candidates):
    y = pool.embeddings[:, candidates]
    return np.einsum("ij,ij->j", y, state.x_inv @ y)


def greedy_size_constrained(pool: DesignPool, size: int, init_indices,
                            ridge: float = 0.0) -> DesignState:
    """Grow the design one column at a time (largest payoff first, ties to
    the lowest index) until ``size`` columns are selected."""
    state = init_design(pool, init_indices, ridge=ridge)
    if size < len(state.selected) or size > pool.n_columns:
        raise ValueError(
            f"size must be in [{len(state.selected)}, {pool.n_columns}], got {size}"
        )
    selectable = pool.selectable
    while len(state.selected) < size:
        chosen = np.flatnonzero(selectable)
        candidates = [j for j in chosen if j not in set(state.selected)]
        if not candidates:
            break
        payoffs = _candidate_payoffs(state, pool, candidates)
        add_to_design(state, pool, candidates[int(np.argmax(payoffs))])
    return state


def greedy_time_constrained(pool: DesignPool, budget: float, init_indices,
                            ridge: float = 0.0) -> DesignState:
    """Grow the design by payoff per unit predicted runtime, skipping
    candidates that would push the total predicted runtime past ``budget``;
    stops when nothing fits."""
    budget = check_positive_scalar(budget, "budget")
    state = init_design(pool, init_indices, ridge=ridge)
    elapsed = float(pool.runtimes[state.selected].sum())
    selectable = pool.selectable
    while True:
        taken = set(state.selected)
        candidates = [j for j in np.flatnonzero(selectable)
                      if j not in taken and elapsed + pool.runtimes[j] <= budget]
        if not candidates:
            break
        payoffs = _candidate_payoffs(state, pool, candidates)
        ratios = payoffs / pool.runtimes[candidates]
        j = candidates[int(np.argmax(ratios))]
        add_to_design(state, pool, j)
        elapsed += float(pool.runtimes[j])
    return state


def qr_init(pool: DesignPool, budget: float, k: int):
    """Pick k independent, affordable starter columns.

    Columns whose predicted runtime is at most budget / (2k) qualify; when at
    least k qualify, return the first k pivots of a column-pivoted QR of the
    qualifying columns (fallback False). Otherwise fall back to cheapest
    first (ties to the lowest index), accumulating until the budget is first
    exceeded; the overflowing column stays selected, no greedy phase should
    follow (fallback True).
    """
    budget = check_positive_scalar(budget, "budget")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    selectable = pool.selectable
    threshold = budget / (2.0 * k)
    valid = np.flatnonzero(selectable & (pool.runtimes <= threshold))
    if valid.size >= k:
        _, _, pivots = scipy.linalg.qr(pool.embeddings[:, valid], pivoting=True, mode="economic")
        return [int(valid[p]) for p in pivots[:k]], False
    order = np.flatnonzero(selectable)
    order = order[np.argsort(pool.runtimes[order], kind="stable")]
    chosen = []
    elapsed = 0.0
    for j in order:
        chosen.append(int(j))
        elapsed += float(pool.runtimes[j])
        if elapsed > budget:
            break
    return chosen, True


def select_design(pool: DesignPool, budget: float, k: int):
    """QR initialization followed by time-constrained greedy growth.

    Returns (selected indices, fallback flag). On fallback the cheapest-first
    set is returned as-is (its predicted total may overshoot the budget by
    its final column; the caller's hard budget still gates observations).
    """
    init, fallback = qr_init(pool, budget, k)
    if fallback:
        return init, True
    state = greedy_time_constrained(pool, budget, init)
    return state.selected, False


def select_design_weighted(pool: DesignPool, budget: float, k: int):
    """Weighted variant: identical flow on columns rescaled by 1/sigma_j."""
    scaled = pool.rescaled_by_weights()
    return select_design(scaled, budget, k)


def estimate_pipeline_variances(e, x, y) -> np.ndarray:
    """Per-column sample variance (ddof=1, floored at 1e-12) of the residual
    E - X^T Y; the square roots of these are design weights."""
    e = check_matrix(e, "error matrix")
    x = check_matrix(x, "dataset factors")
    y = check_matrix(y, "pipeline embeddings")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"factor rank mismatch: {x.shape[0]} vs {y.shape[0]}")
    if e.shape != (x.shape[1], y.shape[1]):
        raise ValueError(
            f"error matrix shape {e.shape} does not match factors "
            f"({x.shape[1]}, {y.shape[1]})"
        )
    if e.shape[0] < 2:
        raise ValueError("need at least two rows for a sample variance")
    resid = e - x.T @ y
    return np.maximum(np.var(resid, axis=0, ddof=1), 1e-12)
