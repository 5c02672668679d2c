"""Low-rank surrogate models: PCA-style matrix split and Tucker via HOOI.

Both factorizations use a deterministic sign convention (the largest-magnitude
entry of every singular vector is made nonnegative) so repeated runs on the
same input produce bitwise-identical factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensors import fold, frobenius_norm, matricize, multi_mode_product
from .validation import as_float_array, check_matrix, check_tensor, check_vector


def _fix_signs(u, v=None):
    """Flip singular-vector signs so each column's largest-|entry| is >= 0."""
    picks = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[picks, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u = u * signs
    if v is None:
        return u
    return u, v * signs


def deterministic_svd(m):
    """SVD with the deterministic sign convention; returns (U, s, Vt)."""
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    u, vt_t = _fix_signs(u, vt.T)
    return u, s, vt_t.T


@dataclass
class PcaFactors:
    """Split E ~= X^T Y with X = S^(1/2) U^T and Y = S^(1/2) V^T.

    Rows are ordered by decreasing singular value, so the rank-k model is
    exactly the leading k rows of both factors.
    """

    x: np.ndarray
    y: np.ndarray
    singular_values: np.ndarray

    def truncate(self, rank: int) -> "PcaFactors":
        if rank < 1 or rank > self.x.shape[0]:
            raise ValueError(f"rank must be in [1, {self.x.shape[0]}], got {rank}")
        return PcaFactors(self.x[:rank], self.y[:rank], self.singular_values)

    def reconstruction(self, rank=None) -> np.ndarray:
        if rank is None:
            return self.x.T @ self.y
        t = self.truncate(rank)
        return t.x.T @ t.y


def pca_factorize(e, rank=None) -> PcaFactors:
    """Factor a matrix into PCA-style square-root-scaled factors.

    With ``rank`` given, keeps the leading ``rank`` rows (equivalently, rows
    of the full factorization: the rank-k factors are a submatrix of the
    full ones).
    """
    e = check_matrix(e, "error matrix")
    u, s, vt = deterministic_svd(e)
    root = np.sqrt(s)
    x = root[:, None] * u.T
    y = root[:, None] * vt
    full = PcaFactors(x=x, y=y, singular_values=s)
    if rank is None:
        return full
    return PcaFactors(x=full.x[:rank].copy(), y=full.y[:rank].copy(), singular_values=s)


def rank_from_energy(singular_values, fraction: float) -> int:
    """Smallest k whose leading singular values capture ``fraction`` of the
    total squared energy."""
    s = check_vector(singular_values, "singular values")
    if s.size == 0:
        raise ValueError("singular values must be nonempty")
    if np.any(s < 0):
        raise ValueError("singular values must be nonnegative")
    if np.any(np.diff(s) > 1e-12 * max(1.0, float(s[0]))):
        raise ValueError("singular values must be nonincreasing")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    energy = np.cumsum(s * s)
    total = energy[-1]
    k = int(np.searchsorted(energy, fraction * total - 1e-15)) + 1
    return min(k, s.size)


@dataclass
class TuckerFactors:
    """Tucker model: core tensor plus one orthonormal factor per mode.

    ``error_history`` holds the relative reconstruction error after each
    HOOI sweep (including the initialization as entry 0).
    """

    core: np.ndarray
    factors: list
    error_history: list = field(default_factory=list)
    converged: bool = False

    @property
    def ranks(self):
        return tuple(self.core.shape)

    def reconstruction(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)


def _leading_left_vectors(m, rank):
    u, _, _ = deterministic_svd(m)
    return np.ascontiguousarray(u[:, :rank])


def tucker_decompose(t, ranks, max_sweeps: int = 50, tol: float = 1e-8, init_factors=None) -> TuckerFactors:
    """Tucker decomposition at the given multilinear ranks.

    Initializes each factor with the leading left singular vectors of the
    corresponding unfolding (or ``init_factors`` when warm starting), then
    runs HOOI sweeps until the relative reconstruction error decreases by
    less than ``tol`` or ``max_sweeps`` is hit. The fit error is monotone
    over sweeps because each per-mode update solves its subproblem exactly.
    """
    t = check_tensor(t, "tensor")
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != t.ndim:
        raise ValueError(f"expected {t.ndim} ranks, got {len(ranks)}")
    for m, (r, d) in enumerate(zip(ranks, t.shape), start=1):
        if r < 1 or r > d:
            raise ValueError(f"rank for mode {m} must be in [1, {d}], got {r}")

    norm_t = frobenius_norm(t)
    if norm_t == 0.0:
        core = np.zeros(ranks)
        factors = [np.eye(d)[:, :r] for r, d in zip(ranks, t.shape)]
        return TuckerFactors(core=core, factors=factors, error_history=[0.0], converged=True)

    if init_factors is not None:
        if len(init_factors) != t.ndim:
            raise ValueError(f"expected {t.ndim} init factors, got {len(init_factors)}")
        factors = []
        for m, (u, r, d) in enumerate(zip(init_factors, ranks, t.shape), start=1):
            u = as_float_array(u, f"init factor {m}")
            if u.shape != (d, r):
                raise ValueError(f"init factor {m} must be {d}x{r}, got {u.shape}")
            factors.append(u.copy())
    else:
        factors = [_leading_left_vectors(matricize(t, m), r) for m, r in enumerate(ranks, start=1)]

    def fit_error(core):
        # orthonormal factors: |t - recon|^2 = |t|^2 - |core|^2
        gap = max(norm_t**2 - frobenius_norm(core) ** 2, 0.0)
        return float(np.sqrt(gap)) / norm_t

    transposed = [u.T for u in factors]
    core = multi_mode_product(t, transposed)
    history = [fit_error(core)]
    converged = False

    for _ in range(max_sweeps):
        for m in range(1, t.ndim + 1):
            partial = multi_mode_product(t, transposed, skip=m)
            factors[m - 1] = _leading_left_vectors(matricize(partial, m), ranks[m - 1])
            transposed[m - 1] = factors[m - 1].T
        core = multi_mode_product(t, transposed)
        history.append(fit_error(core))
        if history[-2] - history[-1] < tol:
            converged = True
            break

    return TuckerFactors(core=core, factors=factors, error_history=history, converged=converged)


@dataclass
class EmbeddingModel:
    """Dataset/pipeline embeddings extracted from a Tucker model of an
    (datasets x pipeline-step ... x pipeline-step) error tensor.

    ``dataset_factors`` is r1 x n_datasets (columns embed datasets) and
    ``pipeline_embeddings`` is r1 x n_pipelines (columns embed full
    pipelines, enumerated in C order over the step modes). The product
    ``dataset_factors.T @ pipeline_embeddings`` reconstructs the mode-1
    unfolding of the model.
    """

    dataset_factors: np.ndarray
    pipeline_embeddings: np.ndarray
    singular_values: np.ndarray


def pipeline_embeddings(factors: TuckerFactors) -> EmbeddingModel:
    """Collapse every non-dataset mode of a Tucker model into per-pipeline
    embedding columns (rows ordered like the mode-1 factor columns)."""
    core = factors.core
    us = factors.factors
    if core.ndim < 2:
        raise ValueError("need at least an order-2 model to build embeddings")
    collapsed = multi_mode_product(core, us, skip=1)
    y = matricize(collapsed, 1)
    x = np.ascontiguousarray(us[0].T)
    recon_unf = matricize(factors.reconstruction(), 1)
    sv = np.linalg.svd(recon_unf, compute_uv=False)
    return EmbeddingModel(dataset_factors=x, pipeline_embeddings=y, singular_values=sv)
