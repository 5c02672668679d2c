"""Tensor algebra: matricization, folding, mode products, masks."""

import numpy as np
import pytest

from pipecast.tensors import (
    ObservedTensor,
    dof_counts,
    fold,
    frobenius_norm,
    masked_values,
    matricize,
    mode_product,
    multi_mode_product,
)


def test_matricize_matrix_mode1_is_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matricize(m, 1), m)


def test_matricize_frozen_order3_example():
    # entries x[i,j,k] = 4i + 2j + k: mode-1 rows must come out in C order
    t = np.arange(8, dtype=float).reshape(2, 2, 2)
    expected = np.array([[0.0, 1.0, 2.0, 3.0], [4.0, 5.0, 6.0, 7.0]])
    assert np.array_equal(matricize(t, 1), expected)


def test_fold_inverts_frozen_example():
    mat = np.array([[0.0, 1.0, 2.0, 3.0], [4.0, 5.0, 6.0, 7.0]])
    t = fold(mat, 1, (2, 2, 2))
    assert np.array_equal(t, np.arange(8, dtype=float).reshape(2, 2, 2))


def test_fold_matricize_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(5):
        t = rng.standard_normal((3, 4, 5))
        for mode in (1, 2, 3):
            assert np.array_equal(fold(matricize(t, mode), mode, t.shape), t)


def test_fold_wrong_shape_product_errors():
    mat = np.zeros((2, 5))
    with pytest.raises(ValueError):
        fold(mat, 1, (2, 2, 2))


def test_matricize_mode_out_of_range():
    t = np.zeros((2, 2, 2))
    with pytest.raises(ValueError):
        matricize(t, 0)
    with pytest.raises(ValueError):
        matricize(t, 4)


def test_mode_product_identity():
    rng = np.random.default_rng(1)
    t = rng.standard_normal((3, 4, 2))
    for mode, d in ((1, 3), (2, 4), (3, 2)):
        assert np.allclose(mode_product(t, np.eye(d), mode), t)


def test_mode_product_matrix_case():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((4, 3))
    u = rng.standard_normal((5, 4))
    assert np.allclose(mode_product(m, u, 1), u @ m)


def test_mode_product_matches_matricize_path():
    rng = np.random.default_rng(3)
    t = rng.standard_normal((3, 3, 3))
    u = rng.standard_normal((4, 3))
    for mode in (1, 2, 3):
        direct = mode_product(t, u, mode)
        shape = list(t.shape)
        shape[mode - 1] = 4
        via_matrix = fold(u @ matricize(t, mode), mode, tuple(shape))
        assert np.max(np.abs(direct - via_matrix)) < 1e-12


def test_multi_mode_product_with_skip():
    rng = np.random.default_rng(4)
    t = rng.standard_normal((3, 4, 2))
    us = [rng.standard_normal((2, 3)), rng.standard_normal((2, 4)),
          rng.standard_normal((2, 2))]
    full = multi_mode_product(t, us)
    step = t
    for i, u in enumerate(us):
        step = mode_product(step, u, i + 1)
    assert np.allclose(full, step)

    skipped = multi_mode_product(t, us, skip=2)
    manual = mode_product(mode_product(t, us[0], 1), us[2], 3)
    assert np.allclose(skipped, manual)


def test_frobenius_norm_basics():
    assert frobenius_norm(np.zeros((3, 2, 2))) == 0.0
    assert abs(frobenius_norm(np.eye(2)) - np.sqrt(2.0)) < 1e-15


def test_frobenius_norm_matches_matricization():
    rng = np.random.default_rng(5)
    t = rng.standard_normal((4, 3, 5))
    for mode in (1, 2, 3):
        assert abs(frobenius_norm(t) - np.linalg.norm(matricize(t, mode))) < 1e-12


def test_dof_counts_frozen_values():
    assert dof_counts(10, 3, 2) == (56, 216, 360)


def test_dof_ordering_holds_below_full_rank():
    for n in (3, 4):
        for extent in range(2, 9):
            for rank in range(1, extent):
                m0, m1, m2 = dof_counts(extent, n, rank)
                assert m0 < m1 < m2


def test_dof_full_rank_boundary():
    m0, _, _ = dof_counts(5, 3, 5)
    assert m0 == 5 ** 3


def test_observed_tensor_accounting():
    data = np.array([[1.0, 0.0], [0.0, 2.0]])
    mask = np.array([[1.0, 0.0], [0.0, 1.0]])
    obs = ObservedTensor(data=data, mask=mask)
    assert obs.n_observed == 2
    assert obs.missing_ratio == 0.5
    assert np.array_equal(masked_values(obs.data, obs.mask), np.array([1.0, 2.0]))


def test_observed_tensor_nan_bridge():
    arr = np.array([[1.0, np.nan], [3.0, 4.0]])
    obs = ObservedTensor.from_nan_array(arr)
    assert np.array_equal(obs.mask, np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert obs.data[0, 1] == 0.0
    back = obs.to_nan_array()
    assert np.isnan(back[0, 1])
    assert back[1, 0] == 3.0


def test_observed_tensor_rejects_bad_mask():
    data = np.zeros((2, 2))
    with pytest.raises(ValueError):
        ObservedTensor(data=data, mask=np.full((2, 2), 0.5))
    with pytest.raises(ValueError):
        ObservedTensor(data=data, mask=np.ones((2, 3)))
