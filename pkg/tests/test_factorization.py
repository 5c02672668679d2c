"""PCA and Tucker factorization with deterministic sign conventions."""

import numpy as np
import pytest

from pipecast.factorization import (
    EmbeddingModel,
    PcaFactors,
    TuckerFactors,
    deterministic_svd,
    pca_factorize,
    pipeline_embeddings,
    rank_from_energy,
    tucker_decompose,
)
from pipecast.tensors import frobenius_norm, matricize, multi_mode_product


def test_deterministic_svd_reconstructs():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((6, 4))
    u, s, vt = deterministic_svd(m)
    assert np.allclose(u @ np.diag(s) @ vt, m)


def test_deterministic_svd_sign_convention():
    rng = np.random.default_rng(1)
    m = rng.standard_normal((5, 5))
    u, _, _ = deterministic_svd(m)
    for j in range(u.shape[1]):
        col = u[:, j]
        assert col[np.argmax(np.abs(col))] >= 0.0


def test_deterministic_svd_repeatable():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((7, 3))
    first = deterministic_svd(m)
    second = deterministic_svd(m.copy())
    for a, b in zip(first, second):
        assert np.array_equal(a, b)


def test_pca_rank_one_exact():
    rng = np.random.default_rng(3)
    u = rng.standard_normal(6)
    v = rng.standard_normal(9)
    e = np.outer(u, v)
    factors = pca_factorize(e, rank=1)
    assert np.linalg.norm(e - factors.x.T @ factors.y) < 1e-10


def test_pca_full_rank_exact():
    rng = np.random.default_rng(4)
    e = rng.standard_normal((10, 8))
    factors = pca_factorize(e, rank=8)
    assert np.linalg.norm(e - factors.x.T @ factors.y) < 1e-10


def test_pca_truncation_consistency():
    rng = np.random.default_rng(5)
    e = rng.standard_normal((10, 8))
    full = pca_factorize(e)
    for k in (1, 3, 5):
        small = pca_factorize(e, rank=k)
        assert np.allclose(small.x, full.x[:k], atol=1e-10)
        assert np.allclose(small.y, full.y[:k], atol=1e-10)
        assert np.allclose(small.truncate(k).x, small.x)


def test_pca_reconstruction_error_matches_tail_energy():
    rng = np.random.default_rng(6)
    e = rng.standard_normal((12, 9))
    _, s, _ = deterministic_svd(e)
    for k in (2, 4, 7):
        factors = pca_factorize(e, rank=k)
        err = np.linalg.norm(e - factors.reconstruction())
        tail = np.sqrt(np.sum(s[k:] ** 2))
        assert abs(err - tail) < 1e-8 * max(tail, 1.0)


def test_rank_from_energy_frozen_cases():
    assert rank_from_energy(np.array([1.0, 0.0, 0.0]), 0.97) == 1
    # cumulative energies 4/6 and 5/6 around the 0.8 cut
    assert rank_from_energy(np.array([2.0, 1.0, 1.0]), 0.8) == 2


def test_rank_from_energy_rejects_unsorted():
    with pytest.raises(ValueError):
        rank_from_energy(np.array([3.0, 4.0]), 0.9)


def _planted(rng, shape, ranks):
    factors = []
    for d, r in zip(shape, ranks):
        q, _ = np.linalg.qr(rng.standard_normal((d, r)))
        factors.append(q)
    core = rng.standard_normal(ranks)
    return multi_mode_product(core, [f for f in factors]), factors


def test_tucker_recovers_planted_model():
    rng = np.random.default_rng(7)
    t, _ = _planted(rng, (8, 7, 6), (3, 2, 2))
    result = tucker_decompose(t, (3, 2, 2))
    rel = frobenius_norm(t - result.reconstruction()) / frobenius_norm(t)
    assert rel < 1e-8
    assert result.converged


def test_tucker_full_ranks_exact():
    rng = np.random.default_rng(8)
    t = rng.standard_normal((4, 3, 5))
    result = tucker_decompose(t, (4, 3, 5))
    assert frobenius_norm(t - result.reconstruction()) < 1e-10


def test_tucker_monotone_error_and_orthonormal_factors():
    rng = np.random.default_rng(9)
    t = rng.standard_normal((6, 5, 4)) + _planted(rng, (6, 5, 4), (2, 2, 2))[0] * 3.0
    result = tucker_decompose(t, (2, 2, 2))
    hist = result.error_history
    assert len(hist) >= 1
    for a, b in zip(hist, hist[1:]):
        assert b <= a + 1e-12
    for u in result.factors:
        assert np.allclose(u.T @ u, np.eye(u.shape[1]), atol=1e-10)


def test_tucker_error_grows_as_ranks_shrink():
    rng = np.random.default_rng(10)
    t = rng.standard_normal((6, 6, 6))
    errs = []
    for r in (5, 4, 3, 2, 1):
        result = tucker_decompose(t, (r, r, r))
        errs.append(frobenius_norm(t - result.reconstruction()))
    for a, b in zip(errs, errs[1:]):
        assert b >= a - 1e-10


def test_tucker_matrix_case_matches_pca_error():
    rng = np.random.default_rng(11)
    m = rng.standard_normal((9, 7))
    result = tucker_decompose(m, (3, 3))
    pca = pca_factorize(m, rank=3)
    tucker_err = frobenius_norm(m - result.reconstruction())
    pca_err = np.linalg.norm(m - pca.reconstruction())
    assert abs(tucker_err - pca_err) < 1e-8


def test_tucker_rejects_bad_ranks():
    t = np.zeros((3, 3, 3))
    with pytest.raises(ValueError):
        tucker_decompose(t, (3, 3))
    with pytest.raises(ValueError):
        tucker_decompose(t, (0, 3, 3))
    with pytest.raises(ValueError):
        tucker_decompose(t, (4, 3, 3))


def test_pipeline_embeddings_consistency():
    rng = np.random.default_rng(12)
    t, _ = _planted(rng, (7, 3, 4, 5), (3, 2, 2, 2))
    result = tucker_decompose(t, (3, 2, 2, 2))
    model = pipeline_embeddings(result)
    recon = matricize(result.reconstruction(), 1)
    assert np.max(np.abs(model.dataset_factors.T @ model.pipeline_embeddings - recon)) < 1e-10


def test_pipeline_embeddings_matrix_case():
    rng = np.random.default_rng(13)
    m = rng.standard_normal((8, 6))
    result = tucker_decompose(m, (3, 6))
    model = pipeline_embeddings(result)
    assert model.pipeline_embeddings.shape == (3, 6)
    recon = result.reconstruction()
    assert np.max(np.abs(model.dataset_factors.T @ model.pipeline_embeddings - recon)) < 1e-10


def test_pipeline_embeddings_permutation_equivariance():
    rng = np.random.default_rng(14)
    t, _ = _planted(rng, (7, 3, 8), (3, 2, 3))
    base = pipeline_embeddings(tucker_decompose(t, (3, 2, 3)))
    perm = rng.permutation(8)
    permuted = pipeline_embeddings(tucker_decompose(t[:, :, perm], (3, 2, 3)))
    # pipeline j of the permuted tensor is pipeline perm[j] of the original;
    # columns of Y are indexed by the flattened (step, estimator) pair
    y_base = base.pipeline_embeddings.reshape(3, 3, 8)
    y_perm = permuted.pipeline_embeddings.reshape(3, 3, 8)
    assert np.allclose(y_perm, y_base[:, :, perm], atol=1e-8)


def test_embedding_model_fields():
    rng = np.random.default_rng(15)
    t, _ = _planted(rng, (6, 4, 5), (2, 2, 2))
    model = pipeline_embeddings(tucker_decompose(t, (2, 2, 2)))
    assert isinstance(model, EmbeddingModel)
    assert model.dataset_factors.shape == (2, 6)
    assert model.pipeline_embeddings.shape == (2, 20)
    assert model.singular_values.shape[0] >= 2
    sv = model.singular_values
    assert np.all(sv[:-1] >= sv[1:] - 1e-12)
