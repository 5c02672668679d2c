"""EM-style completion of partially observed tensors and matrices."""

import numpy as np
import pytest

from pipecast.completion import (
    EmMatrixCompleter,
    EmTuckerCompleter,
    em_matrix,
    em_tucker,
    relative_error,
)
from pipecast.tensors import ObservedTensor, multi_mode_product


def _planted(rng, shape, ranks):
    factors = []
    for d, r in zip(shape, ranks):
        q, _ = np.linalg.qr(rng.standard_normal((d, r)))
        factors.append(q)
    return multi_mode_product(rng.standard_normal(ranks), factors)


def test_relative_error_frozen_cases():
    rng = np.random.default_rng(0)
    t = rng.standard_normal((4, 5))
    assert relative_error(t, t) == 0.0
    assert abs(relative_error(t, np.zeros_like(t)) - 1.0) < 1e-15


def test_relative_error_matches_scalar_loop():
    rng = np.random.default_rng(1)
    truth = rng.standard_normal((3, 4))
    est = rng.standard_normal((3, 4))
    mask = (rng.uniform(size=(3, 4)) < 0.6).astype(float)
    num = den = 0.0
    for i in range(3):
        for j in range(4):
            if mask[i, j]:
                num += (truth[i, j] - est[i, j]) ** 2
                den += truth[i, j] ** 2
    assert abs(relative_error(truth, est, mask) - num / den) < 1e-14


def test_relative_error_zero_reference_errors():
    with pytest.raises(ValueError):
        relative_error(np.zeros((2, 2)), np.ones((2, 2)))


def test_em_tucker_fully_observed_is_single_iteration():
    rng = np.random.default_rng(2)
    t = rng.uniform(0.0, 1.0, (5, 4, 3))
    result = em_tucker(t, (2, 2, 2))
    assert result.iterations == 1
    assert result.converged
    assert np.array_equal(result.completed, t)


def test_em_tucker_rank1_single_hidden_entry():
    rng = np.random.default_rng(3)
    a, b, c = rng.uniform(0.5, 1.5, 4), rng.uniform(0.5, 1.5, 5), rng.uniform(0.5, 1.5, 3)
    t = np.einsum("i,j,k->ijk", a, b, c)
    mask = np.ones_like(t)
    mask[2, 3, 1] = 0.0
    result = em_tucker(t * mask, (1, 1, 1), mask=mask, tol=1e-12)
    rel = abs(result.completed[2, 3, 1] - t[2, 3, 1]) / abs(t[2, 3, 1])
    assert rel < 1e-6


def test_em_tucker_planted_recovery_under_missingness():
    for seed in range(3):
        rng = np.random.default_rng(100 + seed)
        t = _planted(rng, (20, 6, 6, 6), (3, 2, 2, 2))
        mask = (rng.uniform(size=t.shape) >= 0.3).astype(float)
        result = em_tucker(t * mask, (3, 2, 2, 2), mask=mask)
        hidden = 1.0 - mask
        assert relative_error(t, result.completed, hidden) < 1e-2
        assert result.iterations <= 500


def test_em_tucker_preserves_observed_and_monotone_history():
    rng = np.random.default_rng(4)
    t = _planted(rng, (10, 5, 4), (2, 2, 2))
    mask = (rng.uniform(size=t.shape) >= 0.4).astype(float)
    result = em_tucker(t * mask, (2, 2, 2), mask=mask)
    assert np.array_equal(result.completed[mask == 1], (t * mask)[mask == 1])
    hist = result.error_history
    for a, b in zip(hist, hist[1:]):
        assert b <= a + 1e-12


def test_em_tucker_input_validation():
    t = np.ones((3, 3, 3))
    with pytest.raises(ValueError):
        em_tucker(t, (2, 2, 2), mask=np.zeros_like(t))
    bad = t.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        em_tucker(bad, (2, 2, 2), mask=np.ones_like(t))


def test_em_matrix_agrees_with_em_tucker_on_matrices():
    rng = np.random.default_rng(5)
    m = _planted(rng, (12, 9), (3, 3))
    mask = (rng.uniform(size=m.shape) >= 0.3).astype(float)
    via_matrix = em_matrix(m * mask, 3, mask=mask)
    via_tucker = em_tucker(m * mask, (3, 3), mask=mask)
    assert np.linalg.norm(via_matrix.completed - via_tucker.completed) < 1e-8


def test_em_matrix_fully_observed_unchanged():
    rng = np.random.default_rng(6)
    m = rng.standard_normal((7, 5))
    result = em_matrix(m, 2)
    assert np.array_equal(result.completed, m)
    assert result.iterations == 1


def test_em_matrix_unfolds_along_requested_mode():
    rng = np.random.default_rng(7)
    t = _planted(rng, (8, 6, 5), (2, 2, 2))
    mask = (rng.uniform(size=t.shape) >= 0.25).astype(float)
    for mode in (1, 2, 3):
        result = em_matrix(t * mask, 2, mask=mask, mode=mode)
        assert result.completed.shape == t.shape
        assert np.array_equal(result.completed[mask == 1], (t * mask)[mask == 1])


def test_tensor_beats_matrix_on_planted_tensors():
    wins = 0
    trials = 10
    for seed in range(trials):
        rng = np.random.default_rng(300 + seed)
        t = _planted(rng, (12, 5, 5, 5), (3, 2, 2, 2))
        mask = (rng.uniform(size=t.shape) >= 0.3).astype(float)
        hidden = 1.0 - mask
        tucker = em_tucker(t * mask, (3, 2, 2, 2), mask=mask)
        matrix = em_matrix(t * mask, 3, mask=mask)
        err_t = relative_error(t, tucker.completed, hidden)
        err_m = relative_error(t, matrix.completed, hidden)
        wins += err_t < err_m
    assert wins >= int(0.9 * trials)


def test_completer_estimators_nan_interface():
    rng = np.random.default_rng(8)
    t = _planted(rng, (10, 5, 4), (2, 2, 2))
    mask = (rng.uniform(size=t.shape) >= 0.35).astype(float)
    with_nans = np.where(mask == 1, t, np.nan)

    est = EmTuckerCompleter(ranks=(2, 2, 2))
    out = est.fit_transform(with_nans)
    assert not np.isnan(out).any()
    assert relative_error(t, out, 1.0 - mask) < 1e-2
    assert est.n_iterations_ >= 1
    assert est.converged_ in (True, False)
    assert len(est.error_history_) == est.n_iterations_

    direct = em_tucker(t * mask, (2, 2, 2), mask=mask)
    assert np.array_equal(out, direct.completed)


def test_completer_estimators_mask_interface_and_params():
    rng = np.random.default_rng(9)
    m = _planted(rng, (9, 7), (2, 2))
    mask = (rng.uniform(size=m.shape) >= 0.3).astype(float)
    est = EmMatrixCompleter(rank=2)
    assert est.get_params()["rank"] == 2
    out = est.fit_transform(m * mask, mask=mask)
    assert np.array_equal(out, em_matrix(m * mask, 2, mask=mask).completed)
    clone = EmMatrixCompleter(**est.get_params())
    out2 = clone.fit_transform(m * mask, mask=mask)
    assert np.array_equal(out, out2)


def test_em_tucker_accepts_observed_tensor():
    rng = np.random.default_rng(10)
    t = _planted(rng, (8, 4, 4), (2, 2, 2))
    mask = (rng.uniform(size=t.shape) >= 0.3).astype(float)
    obs = ObservedTensor(data=t * mask, mask=mask)
    result = em_tucker(obs, (2, 2, 2))
    assert relative_error(t, result.completed, 1.0 - mask) < 1e-2
