"""Online pipeline selection for a new dataset under a runtime budget.

Each round: pick an informative, affordable set of pipelines (D-optimal
design at the current working rank), observe their errors, solve least
squares for the new dataset's embedding, predict all pipeline errors, then
observe the most promising few and keep the best of them as an ensemble.
Rounds repeat with a doubling time target while it stays within half the
total budget; the working rank grows by one after a round whose validation
error improved on the previous round's.

Observations are charged their *true* runtime against a hard budget that is
never exceeded; re-observing a cached pipeline is free. Reports are fully
deterministic functions of (oracle, config) unless wall-clock charging of
the design overhead is explicitly enabled.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .design import DesignPool, select_design
from .factorization import rank_from_energy
from .validation import check_index_list, check_matrix, check_vector


class Oracle(Protocol):
    """Source of ground-truth observations for one target dataset."""

    def pipeline_error(self, j: int) -> float:
        ...

    def pipeline_runtime(self, j: int) -> float:
        ...


@dataclass
class ArrayOracle:
    """Oracle backed by dense per-pipeline arrays."""

    errors: np.ndarray
    runtimes: np.ndarray

    def __post_init__(self):
        self.errors = check_vector(self.errors, "errors")
        self.runtimes = check_vector(self.runtimes, "runtimes")
        if self.errors.size != self.runtimes.size:
            raise ValueError(
                f"got {self.errors.size} errors but {self.runtimes.size} runtimes"
            )
        if np.any(self.runtimes <= 0):
            raise ValueError("true runtimes must be positive")

    def pipeline_error(self, j: int) -> float:
        return float(self.errors[j])

    def pipeline_runtime(self, j: int) -> float:
        return float(self.runtimes[j])


@dataclass
class SelectionConfig:
    """Knobs for one online selection run."""

    total_budget: float
    initial_time_target: float
    initial_rank: int | None = None
    energy_fraction: float = 0.97
    top_n: int = 10
    ensemble_size: int = 5
    charge_design_overhead: bool = False

    def validate(self):
        if not np.isfinite(self.total_budget) or self.total_budget <= 0:
            raise ValueError(f"total_budget must be positive, got {self.total_budget}")
        if not np.isfinite(self.initial_time_target) or self.initial_time_target <= 0:
            raise ValueError(
                f"initial_time_target must be positive, got {self.initial_time_target}"
            )
        if self.initial_time_target > self.total_budget / 2.0:
            raise ValueError(
                "initial_time_target must be at most half the total budget "
                f"({self.initial_time_target} > {self.total_budget / 2.0})"
            )
        if self.initial_rank is not None and self.initial_rank < 1:
            raise ValueError(f"initial_rank must be >= 1, got {self.initial_rank}")
        if not 0.0 < self.energy_fraction <= 1.0:
            raise ValueError(f"energy_fraction must be in (0, 1], got {self.energy_fraction}")
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")
        if self.ensemble_size < 1:
            raise ValueError(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        return self


@dataclass
class SelectionContext:
    """Frozen per-dataset inputs to the online loop."""

    pipeline_embeddings: np.ndarray   # full-rank rows, one column per pipeline
    singular_values: np.ndarray
    predicted_runtimes: np.ndarray    # seconds per pipeline for this dataset
    oracle: Oracle

    def __post_init__(self):
        self.pipeline_embeddings = check_matrix(self.pipeline_embeddings, "embeddings")
        self.singular_values = check_vector(self.singular_values, "singular values")
        self.predicted_runtimes = check_vector(self.predicted_runtimes, "predicted runtimes")
        if self.predicted_runtimes.size != self.pipeline_embeddings.shape[1]:
            raise ValueError("predicted runtimes do not match the number of pipelines")
        if np.any(self.predicted_runtimes <= 0):
            raise ValueError("predicted runtimes must be positive")

    @property
    def n_pipelines(self) -> int:
        return self.pipeline_embeddings.shape[1]

    @property
    def max_rank(self) -> int:
        return self.pipeline_embeddings.shape[0]


@dataclass
class RoundLog:
    """Everything one round did, in order."""

    round_index: int
    time_target: float
    rank_used: int
    designed_set: list
    observed_errors: dict           # pipeline index -> observed error (this round)
    newly_observed: list            # indices first observed in this round
    estimated_embedding: np.ndarray
    predicted_errors: np.ndarray    # raw (unclamped) predictions, all pipelines
    top_candidates: list
    ensemble_members: list
    validation_error: float
    fallback: bool


@dataclass
class SelectionReport:
    rounds: list
    final_ranking: list
    final_ensemble: list
    budget_spent: float
    config: SelectionConfig


def estimate_embedding(embeddings, observed_idx, observed_errors) -> np.ndarray:
    """Least-squares dataset embedding from observed pipeline errors
    (minimum-norm solution when the system is underdetermined)."""
    y = check_matrix(embeddings, "embeddings")
    observed_idx = check_index_list(observed_idx, y.shape[1], "observed indices")
    e = check_vector(np.asarray(observed_errors, dtype=np.float64), "observed errors")
    if e.size != len(observed_idx):
        raise ValueError(f"got {e.size} errors for {len(observed_idx)} indices")
    a = y[:, observed_idx].T
    x, _, _, _ = np.linalg.lstsq(a, e, rcond=None)
    return x


def predict_errors(embeddings, dataset_embedding) -> np.ndarray:
    """Predicted error of every pipeline: Y^T x (raw, unclamped)."""
    y = check_matrix(embeddings, "embeddings")
    x = check_vector(dataset_embedding, "dataset embedding")
    if x.size != y.shape[0]:
        raise ValueError(f"embedding length {x.size} does not match rank {y.shape[0]}")
    return y.T @ x


def clamp_errors(errors) -> np.ndarray:
    """Clamp predictions into [0, 1] for reporting."""
    return np.clip(np.asarray(errors, dtype=np.float64), 0.0, 1.0)


def majority_vote(labels) -> np.ndarray:
    """Per-column majority over integer label rows; ties pick the smallest
    label value."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"labels must be (n_members, n_examples), got shape {labels.shape}")
    if labels.shape[0] == 0:
        raise ValueError("need at least one member")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    if labels.min() < 0:
        raise ValueError("labels must be nonnegative")
    out = np.empty(labels.shape[1], dtype=labels.dtype)
    for j in range(labels.shape[1]):
        counts = np.bincount(labels[:, j])
        out[j] = int(np.argmax(counts))
    return out


class _BudgetedObserver:
    """Observation cache plus hard-budget accounting."""

    def __init__(self, oracle: Oracle, total_budget: float):
        self.oracle = oracle
        self.total_budget = total_budget
        self.spend = 0.0
        self.cache: dict[int, float] = {}

    def observe(self, j: int):
        """Return the pipeline's error, or None if it cannot be afforded.
        Each pipeline is charged its true runtime at most once."""
        if j in self.cache:
            return self.cache[j]
        cost = self.oracle.pipeline_runtime(j)
        if self.spend + cost > self.total_budget:
            return None
        self.spend += cost
        self.cache[j] = self.oracle.pipeline_error(j)
        return self.cache[j]

    def charge_overhead(self, seconds: float):
        self.spend = min(self.spend + seconds, self.total_budget)


def fit_one_round(ctx: SelectionContext, observer: _BudgetedObserver, time_target: float,
                  rank: int, config: SelectionConfig, round_index: int) -> RoundLog:
    """One design/observe/estimate/rank/ensemble round at a fixed rank."""
    rank = min(max(rank, 1), ctx.max_rank)
    y_k = ctx.pipeline_embeddings[:rank]
    pool = DesignPool(embeddings=y_k, runtimes=ctx.predicted_runtimes)

    t0 = time.perf_counter()
    designed, fallback = select_design(pool, time_target, rank)
    if config.charge_design_overhead:
        observer.charge_overhead(time.perf_counter() - t0)

    before = set(observer.cache)
    observed = {}
    for j in designed:
        err = observer.observe(j)
        if err is not None:
            observed[j] = err

    n = ctx.n_pipelines
    if not observed:
        return RoundLog(
            round_index=round_index, time_target=time_target, rank_used=rank,
            designed_set=list(designed), observed_errors={}, newly_observed=[],
            estimated_embedding=np.zeros(rank), predicted_errors=np.zeros(n),
            top_candidates=[], ensemble_members=[], validation_error=float("inf"),
            fallback=True,
        )

    obs_idx = sorted(observed)
    x_hat = estimate_embedding(y_k, obs_idx, [observed[j] for j in obs_idx])
    e_hat = predict_errors(y_k, x_hat)
    ranking = np.argsort(e_hat, kind="stable")
    top = [int(j) for j in ranking[: config.top_n]]
    for j in top:
        err = observer.observe(j)
        if err is not None:
            observed[j] = err

    by_error = sorted(observed.items(), key=lambda kv: (kv[1], kv[0]))
    members = [j for j, _ in by_error[: config.ensemble_size]]
    validation = float(np.mean([observed[j] for j in members])) if members else float("inf")
    newly = sorted(set(observed) - before)

    return RoundLog(
        round_index=round_index, time_target=time_target, rank_used=rank,
        designed_set=list(designed), observed_errors=observed, newly_observed=newly,
        estimated_embedding=x_hat, predicted_errors=e_hat, top_candidates=top,
        ensemble_members=members, validation_error=validation, fallback=fallback,
    )


def run_online(ctx: SelectionContext, config: SelectionConfig) -> SelectionReport:
    """Run budget-doubling rounds and report the final model and spending."""
    config.validate()
    if config.initial_rank is not None:
        rank = min(config.initial_rank, ctx.max_rank)
    else:
        rank = min(rank_from_energy(ctx.singular_values, config.energy_fraction), ctx.max_rank)

    observer = _BudgetedObserver(ctx.oracle, config.total_budget)
    rounds = []
    target = config.initial_time_target
    prev_validation = None
    while target <= config.total_budget / 2.0:
        log = fit_one_round(ctx, observer, target, rank, config, len(rounds))
        rounds.append(log)
        if prev_validation is not None and log.validation_error < prev_validation:
            rank = min(rank + 1, ctx.max_rank)
        prev_validation = log.validation_error
        target *= 2.0

    if not rounds:
        raise ValueError("no rounds were run; check the budget configuration")
    last = rounds[-1]
    final_ranking = [int(j) for j in np.argsort(last.predicted_errors, kind="stable")]
    return SelectionReport(
        rounds=rounds,
        final_ranking=final_ranking,
        final_ensemble=list(last.ensemble_members),
        budget_spent=observer.spend,
        config=config,
    )
