"""Synthetic corpora and the leave-one-dataset-out evaluation harness.

Planted corpora have a known low multilinear rank (so recovery can be
checked against ground truth), entries in [0, 1] like cross-validation
error rates, and per-pipeline runtimes that grow polynomially with dataset
size. The harness censors entries, meta-trains on all but one dataset,
runs the online selection loop on the held-out one at several budget
fractions, and reports regret and true-error ranks against the single best
meta-training pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .completion import em_matrix, em_tucker, relative_error
from .factorization import (EmbeddingModel, TuckerFactors, pca_factorize,
                            pipeline_embeddings, tucker_decompose)
from .kernel_completion import kfmc_fit
from .runtime import RUNTIME_FLOOR, fit_runtime_models
from .selection import ArrayOracle, SelectionConfig, SelectionContext, run_online
from .tensors import ObservedTensor, matricize
from .validation import check_mask, check_tensor

SIZE_RANGES = ((150, 10000), (3, 100))  # (n_points, n_features) sampling ranges
RUNTIME_BASIS_SCALES = (1.0, 1000.0, 100.0, 100000.0)  # 1, n, p, n*p


@dataclass
class SyntheticSpec:
    """Recipe for one planted corpus.

    ``shape`` is (n_datasets, step extents..., n_estimators); the last mode
    indexes estimators, which drive runtimes. ``runtime_law`` holds one row
    of four nonnegative coefficients per estimator over the basis
    (1, n/1000, p/100, n*p/1e5); None draws a random positive law.
    """

    shape: tuple
    tucker_ranks: tuple
    noise_std: float = 0.0
    runtime_law: np.ndarray | None = None
    runtime_jitter: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.shape = tuple(int(d) for d in self.shape)
        self.tucker_ranks = tuple(int(r) for r in self.tucker_ranks)
        if len(self.shape) != len(self.tucker_ranks):
            raise ValueError(
                f"got {len(self.tucker_ranks)} ranks for an order-{len(self.shape)} shape"
            )
        for r, d in zip(self.tucker_ranks, self.shape):
            if not 1 <= r <= d:
                raise ValueError(f"rank {r} out of range for extent {d}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be nonnegative, got {self.noise_std}")
        if self.runtime_jitter < 0:
            raise ValueError(f"runtime_jitter must be nonnegative, got {self.runtime_jitter}")


@dataclass
class SyntheticCorpus:
    truth: np.ndarray
    runtimes: np.ndarray
    dataset_sizes: np.ndarray  # (n_datasets, 2) ints: n_points, n_features
    spec: SyntheticSpec


def _orthonormal_with_ones(extent, rank, rng):
    """Orthonormal extent x rank factor whose column space contains the
    all-ones direction (so affine shifts of the tensor stay inside the
    planted ranks)."""
    cols = [np.full(extent, 1.0 / np.sqrt(extent))]
    if rank > 1:
        cols.append(rng.standard_normal((extent, rank - 1)))
    stacked = np.column_stack(cols)
    q, _ = np.linalg.qr(stacked)
    return q[:, :rank]


def random_runtime_law(n_estimators, rng) -> np.ndarray:
    return rng.uniform(0.05, 0.5, size=(n_estimators, 4))


def evaluate_runtime_law(law_row, n_points, p_features) -> float:
    basis = np.array([
        1.0,
        n_points / RUNTIME_BASIS_SCALES[1],
        p_features / RUNTIME_BASIS_SCALES[2],
        (n_points * p_features) / RUNTIME_BASIS_SCALES[3],
    ])
    return float(law_row @ basis)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Plant a low-multilinear-rank tensor in [0, 1] plus matching runtimes."""
    rng = np.random.default_rng(spec.seed)
    factors = [
        _orthonormal_with_ones(d, r, rng) for d, r in zip(spec.shape, spec.tucker_ranks)
    ]
    core = rng.standard_normal(spec.tucker_ranks)
    truth = TuckerFactors(core=core, factors=factors).reconstruction()
    lo, hi = float(truth.min()), float(truth.max())
    if hi > lo:
        truth = (truth - lo) / (hi - lo)
    else:
        truth = np.full(spec.shape, 0.5)
    if spec.noise_std > 0:
        truth = np.clip(truth + rng.normal(0.0, spec.noise_std, size=spec.shape), 0.0, 1.0)
    truth = np.ascontiguousarray(truth)

    n_datasets = spec.shape[0]
    n_range, p_range = SIZE_RANGES
    n_points = np.exp(rng.uniform(np.log(n_range[0]), np.log(n_range[1]), n_datasets))
    p_features = np.exp(rng.uniform(np.log(p_range[0]), np.log(p_range[1]), n_datasets))
    sizes = np.column_stack([np.round(n_points), np.round(p_features)]).astype(int)

    law = spec.runtime_law
    if law is None:
        law = random_runtime_law(spec.shape[-1], rng)
    law = np.asarray(law, dtype=np.float64)
    if law.shape != (spec.shape[-1], 4):
        raise ValueError(f"runtime_law must be ({spec.shape[-1]}, 4), got {law.shape}")

    base = np.empty((n_datasets, spec.shape[-1]))
    for i in range(n_datasets):
        for e in range(spec.shape[-1]):
            base[i, e] = evaluate_runtime_law(law[e], sizes[i, 0], sizes[i, 1])
    if np.any(base <= 0):
        raise ValueError("runtime law yields nonpositive times on the generated grid")

    # broadcast (dataset, estimator) base times over the middle pipeline modes
    middle = (1,) * (len(spec.shape) - 2)
    runtimes = base.reshape((n_datasets,) + middle + (spec.shape[-1],)) * np.ones(spec.shape)
    if spec.runtime_jitter > 0:
        runtimes = runtimes * np.exp(rng.normal(0.0, spec.runtime_jitter, size=spec.shape))
    runtimes = np.ascontiguousarray(runtimes)

    return SyntheticCorpus(truth=truth, runtimes=runtimes, dataset_sizes=sizes, spec=spec)


def censor_by_runtime(truth, runtimes, threshold: float) -> ObservedTensor:
    """Keep entries whose true runtime is at most ``threshold``."""
    truth = check_tensor(truth, "truth")
    runtimes = check_tensor(runtimes, "runtimes")
    if truth.shape != runtimes.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {runtimes.shape}")
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    mask = (runtimes <= threshold).astype(np.float64)
    return ObservedTensor(data=np.where(mask == 1.0, truth, 0.0), mask=mask)


def censor_uniform(truth, missing_ratio: float, seed: int = 0,
                   max_retries: int = 100) -> ObservedTensor:
    """Hide entries independently with probability ``missing_ratio``,
    redrawing (up to ``max_retries`` times) until every slice along every
    mode keeps at least one observed entry."""
    truth = check_tensor(truth, "truth")
    if not 0.0 <= missing_ratio < 1.0:
        raise ValueError(f"missing_ratio must be in [0, 1), got {missing_ratio}")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        mask = (rng.random(truth.shape) >= missing_ratio).astype(np.float64)
        ok = mask.sum() > 0
        for axis in range(truth.ndim):
            other = tuple(a for a in range(truth.ndim) if a != axis)
            if np.any(mask.sum(axis=other) == 0):
                ok = False
                break
        if ok:
            return ObservedTensor(data=np.where(mask == 1.0, truth, 0.0), mask=mask)
    raise ValueError(
        f"could not cover every slice in {max_retries} draws at "
        f"missing_ratio={missing_ratio}; lower the ratio"
    )


def generate_union_of_quadratics(n_rows: int, n_columns: int, n_manifolds: int = 3,
                                 latent_dim: int = 3, seed: int = 0) -> np.ndarray:
    """Columns drawn from a union of quadratic manifolds: each column is an
    affine-plus-quadratic image of a low-dimensional latent point. Linearly
    high rank, but low-dimensional in a kernel feature space."""
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(latent_dim)
    q_dim = iu[0].size
    maps = [(rng.standard_normal((n_rows, latent_dim)),
             rng.standard_normal((n_rows, q_dim)),
             rng.standard_normal(n_rows)) for _ in range(n_manifolds)]
    cols = []
    for j in range(n_columns):
        a, b, c = maps[j % n_manifolds]
        z = rng.standard_normal(latent_dim)
        quad = np.outer(z, z)[iu]
        cols.append(a @ z + b @ quad + c)
    m = np.column_stack(cols)
    lo, hi = m.min(), m.max()
    return (m - lo) / (hi - lo)


def run_completion_method(name: str, data, mask, tucker_ranks=None, matrix_rank=None,
                          kfmc_params=None, max_iter=1000, tol=1e-4) -> np.ndarray:
    """Dispatch a completion method by name; returns the completed tensor."""
    obs = data if isinstance(data, ObservedTensor) else ObservedTensor(
        data=check_tensor(data), mask=mask)
    if name == "em-tucker":
        if tucker_ranks is None:
            raise ValueError("em-tucker needs tucker_ranks")
        return em_tucker(obs, tucker_ranks, max_iter=max_iter, tol=tol).completed
    if name == "em-matrix":
        if matrix_rank is None:
            raise ValueError("em-matrix needs matrix_rank")
        return em_matrix(obs, matrix_rank, max_iter=max_iter, tol=tol).completed
    if name == "kfmc":
        params = dict(kfmc_params or {})
        r = params.pop("r", None)
        if r is None:
            raise ValueError("kfmc needs r in kfmc_params")
        return kfmc_fit(obs, r, **params).completed
    if name == "zero":
        return obs.data * obs.mask
    raise ValueError(f"unknown completion method {name!r}")


@dataclass
class MethodComparisonRow:
    method: str
    mask_name: str
    hidden_error: float


def compare_completion_methods(truth, masks: dict, methods: dict) -> list:
    """Hidden-entry relative error for each (method, mask) pair.

    ``masks`` maps a name to a binary mask; ``methods`` maps a method name
    to its keyword arguments for :func:`run_completion_method`.
    """
    truth = check_tensor(truth, "truth")
    rows = []
    for mask_name, mask in masks.items():
        mask = check_mask(mask, truth.shape)
        hidden = 1.0 - mask
        if hidden.sum() == 0:
            raise ValueError(f"mask {mask_name!r} hides nothing; nothing to score")
        obs = ObservedTensor(data=truth * mask, mask=mask)
        for method_name, params in methods.items():
            completed = run_completion_method(method_name, obs, None, **params)
            rows.append(MethodComparisonRow(
                method=method_name, mask_name=mask_name,
                hidden_error=relative_error(truth, completed, hidden)))
    return rows


def baseline_pipeline(train_matrix, train_mask=None) -> int:
    """The single pipeline with the lowest mean observed error across
    meta-training datasets (ties to the lowest index)."""
    m = np.asarray(train_matrix, dtype=np.float64)
    if train_mask is None:
        train_mask = np.ones_like(m)
    counts = train_mask.sum(axis=0)
    sums = (m * train_mask).sum(axis=0)
    means = np.where(counts > 0, sums / np.maximum(counts, 1), np.inf)
    return int(np.argmin(means))


def true_error_rank(row, value) -> int:
    """Competition rank of an error value within a dataset's true errors."""
    return 1 + int(np.sum(np.asarray(row) < value))


@dataclass
class LooFold:
    """Held-out evaluation of one dataset for one meta-training method."""

    dataset_index: int
    method: str
    budget_fractions: list
    regrets: list
    engine_ranks: list
    best_errors: list
    baseline_rank: int
    global_min: float
    reports: list = field(default_factory=list)


@dataclass
class RegretCurve:
    method: str
    budget_fractions: list
    mean_regrets: list


def _meta_train(method, train_obs: ObservedTensor, tucker_ranks, kfmc_params, max_iter, tol):
    """Complete + factorize the meta-training tensor; returns an embedding
    model (pipeline embeddings and mode-1 singular values). Matrix methods
    work on the mode-1 unfolding and split it PCA-style."""
    if method == "em-tucker":
        result = em_tucker(train_obs, tucker_ranks, max_iter=max_iter, tol=tol)
        factors = result.factors
        if factors is None or factors.ranks != tuple(tucker_ranks):
            factors = tucker_decompose(result.completed, tucker_ranks)
        return pipeline_embeddings(factors)
    flat = ObservedTensor(data=matricize(train_obs.data, 1),
                          mask=matricize(train_obs.mask, 1))
    if method == "em-matrix":
        completed = em_matrix(flat, tucker_ranks[0], max_iter=max_iter, tol=tol).completed
    elif method == "kfmc":
        params = dict(kfmc_params or {})
        r = params.pop("r", None)
        if r is None:
            raise ValueError("kfmc needs r in kfmc_params")
        completed = kfmc_fit(flat, r, **params).completed
    elif method == "zero":
        completed = flat.data * flat.mask
    else:
        raise ValueError(f"unknown meta-training method {method!r}")
    pca = pca_factorize(completed, rank=tucker_ranks[0])
    return EmbeddingModel(dataset_factors=pca.x, pipeline_embeddings=pca.y,
                          singular_values=pca.singular_values)


def evaluate_loo(truth, runtimes, dataset_sizes, tucker_ranks,
                 methods=("em-tucker",), budget_fractions=(0.1, 1.0),
                 observed_mask=None, initial_rank=None, energy_fraction=0.97,
                 top_n=10, ensemble_size=5, target_divisor=16.0,
                 kfmc_params=None, em_max_iter=1000, em_tol=1e-4,
                 keep_reports=False) -> list:
    """Leave-one-dataset-out evaluation of the full loop.

    For every held-out dataset and method: meta-train on the remaining
    datasets (optionally censored by ``observed_mask``), fit per-pipeline
    runtime models, then run the online engine at each budget fraction of
    the held-out dataset's total true runtime. Returns one LooFold per
    (dataset, method).
    """
    truth = check_tensor(truth, "truth")
    runtimes = check_tensor(runtimes, "runtimes")
    if truth.shape != runtimes.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {runtimes.shape}")
    sizes = np.asarray(dataset_sizes)
    n_datasets = truth.shape[0]
    if sizes.shape != (n_datasets, 2):
        raise ValueError(f"dataset_sizes must be ({n_datasets}, 2), got {sizes.shape}")
    if observed_mask is None:
        observed_mask = np.ones_like(truth)
    observed_mask = check_mask(observed_mask, truth.shape)
    fractions = [float(f) for f in budget_fractions]
    if any(f <= 0 or f > 1 for f in fractions):
        raise ValueError(f"budget fractions must be in (0, 1], got {fractions}")

    folds = []
    for d in range(n_datasets):
        keep = np.arange(n_datasets) != d
        train_obs = ObservedTensor(data=truth[keep] * observed_mask[keep],
                                   mask=observed_mask[keep])
        train_rt = matricize(runtimes[keep], 1)
        train_rt_mask = matricize(observed_mask[keep], 1)
        models = fit_runtime_models(train_rt, sizes[keep], mask=train_rt_mask)

        row_true = matricize(truth[d][None, ...], 1).ravel()
        row_rt = matricize(runtimes[d][None, ...], 1).ravel()
        global_min = float(row_true.min())
        total_runtime = float(row_rt.sum())

        n_pts, n_feat = int(sizes[d, 0]), int(sizes[d, 1])
        predicted = np.array([
            m.predict_one(n_pts, n_feat) if m is not None else RUNTIME_FLOOR
            for m in models
        ])

        train_matrix = matricize(truth[keep], 1)
        train_matrix_mask = matricize(observed_mask[keep], 1)
        base_j = baseline_pipeline(train_matrix, train_matrix_mask)
        base_rank = true_error_rank(row_true, float(row_true[base_j]))

        for method in methods:
            embed = _meta_train(method, train_obs, tucker_ranks,
                                kfmc_params, em_max_iter, em_tol)
            fold = LooFold(dataset_index=d, method=method, budget_fractions=fractions,
                           regrets=[], engine_ranks=[], best_errors=[],
                           baseline_rank=base_rank, global_min=global_min)
            for f in fractions:
                budget = f * total_runtime
                ctx = SelectionContext(
                    pipeline_embeddings=embed.pipeline_embeddings,
                    singular_values=embed.singular_values,
                    predicted_runtimes=predicted,
                    oracle=ArrayOracle(errors=row_true, runtimes=row_rt))
                config = SelectionConfig(
                    total_budget=budget,
                    initial_time_target=budget / target_divisor,
                    initial_rank=initial_rank, energy_fraction=energy_fraction,
                    top_n=top_n, ensemble_size=ensemble_size)
                report = run_online(ctx, config)
                observed = {}
                for rnd in report.rounds:
                    observed.update(rnd.observed_errors)
                best = min(observed.values()) if observed else float("inf")
                fold.regrets.append(best - global_min)
                fold.best_errors.append(best)
                fold.engine_ranks.append(
                    true_error_rank(row_true, best) if observed else truth.size)
                if keep_reports:
                    fold.reports.append(report)
            folds.append(fold)
    return folds


def aggregate_regret_curves(folds) -> list:
    """Mean regret per (method, fraction) across folds."""
    by_method = {}
    for fold in folds:
        by_method.setdefault(fold.method, []).append(fold)
    curves = []
    for method, group in sorted(by_method.items()):
        fractions = group[0].budget_fractions
        regrets = np.array([f.regrets for f in group])
        curves.append(RegretCurve(method=method, budget_fractions=list(fractions),
                                  mean_regrets=[float(r) for r in regrets.mean(axis=0)]))
    return curves


def mean_engine_rank(folds, method, fraction) -> float:
    ranks = [f.engine_ranks[f.budget_fractions.index(fraction)]
             for f in folds if f.method == method]
    if not ranks:
        raise ValueError(f"no folds for method {method!r} at fraction {fraction}")
    return float(np.mean(ranks))


def mean_baseline_rank(folds, method) -> float:
    ranks = [f.baseline_rank for f in folds if f.method == method]
    if not ranks:
        raise ValueError(f"no folds for method {method!r}")
    return float(np.mean(ranks))
