"""Tests for synthetic corpora, censoring, and the evaluation harness."""

import numpy as np
import pytest

from pipecast.completion import em_tucker
from pipecast.factorization import tucker_decompose
from pipecast.synth import (
    SyntheticSpec,
    aggregate_regret_curves,
    baseline_pipeline,
    censor_by_runtime,
    censor_uniform,
    compare_completion_methods,
    evaluate_loo,
    evaluate_runtime_law,
    generate_synthetic,
    generate_union_of_quadratics,
    mean_baseline_rank,
    mean_engine_rank,
    random_runtime_law,
    run_completion_method,
    true_error_rank,
)
from pipecast.tensors import ObservedTensor


def test_generate_deterministic():
    spec = SyntheticSpec(shape=(6, 3, 4), tucker_ranks=(2, 2, 2), seed=42)
    a = generate_synthetic(spec)
    b = generate_synthetic(spec)
    assert np.array_equal(a.truth, b.truth)
    assert np.array_equal(a.runtimes, b.runtimes)
    assert np.array_equal(a.dataset_sizes, b.dataset_sizes)
    c = generate_synthetic(SyntheticSpec(shape=(6, 3, 4), tucker_ranks=(2, 2, 2), seed=43))
    assert not np.array_equal(a.truth, c.truth)


def test_generate_ranges_and_shapes():
    spec = SyntheticSpec(shape=(5, 2, 3, 4), tucker_ranks=(3, 2, 2, 2), seed=1)
    corpus = generate_synthetic(spec)
    assert corpus.truth.shape == (5, 2, 3, 4)
    assert corpus.runtimes.shape == (5, 2, 3, 4)
    assert corpus.truth.min() >= 0.0 and corpus.truth.max() <= 1.0
    assert np.all(corpus.runtimes > 0)
    assert corpus.dataset_sizes.shape == (5, 2)
    assert corpus.dataset_sizes.dtype.kind == "i"
    assert np.all(corpus.dataset_sizes[:, 0] >= 150)
    assert np.all(corpus.dataset_sizes[:, 0] <= 10000)
    assert np.all(corpus.dataset_sizes[:, 1] >= 3)
    assert np.all(corpus.dataset_sizes[:, 1] <= 100)


def test_generate_plants_the_stated_ranks():
    for seed in range(3):
        spec = SyntheticSpec(shape=(8, 3, 5), tucker_ranks=(3, 2, 2),
                             noise_std=0.0, seed=seed)
        corpus = generate_synthetic(spec)
        recon = tucker_decompose(corpus.truth, spec.tucker_ranks).reconstruction()
        assert np.max(np.abs(recon - corpus.truth)) < 1e-8


def test_generate_noise_stays_in_unit_interval():
    spec = SyntheticSpec(shape=(6, 3, 4), tucker_ranks=(2, 2, 2),
                         noise_std=0.3, seed=5)
    corpus = generate_synthetic(spec)
    assert corpus.truth.min() >= 0.0 and corpus.truth.max() <= 1.0
    clean = generate_synthetic(SyntheticSpec(shape=(6, 3, 4), tucker_ranks=(2, 2, 2),
                                             noise_std=0.0, seed=5))
    assert not np.array_equal(corpus.truth, clean.truth)


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(shape=(4, 3), tucker_ranks=(2, 2, 2))
    with pytest.raises(ValueError):
        SyntheticSpec(shape=(4, 3), tucker_ranks=(2, 4))
    with pytest.raises(ValueError):
        SyntheticSpec(shape=(4, 3), tucker_ranks=(0, 2))
    with pytest.raises(ValueError):
        SyntheticSpec(shape=(4, 3), tucker_ranks=(2, 2), noise_std=-0.1)
    with pytest.raises(ValueError):
        SyntheticSpec(shape=(4, 3), tucker_ranks=(2, 2), runtime_jitter=-1.0)


def test_runtime_law_evaluation():
    law = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.isclose(evaluate_runtime_law(law, 1000, 100), 10.0)
    assert np.isclose(evaluate_runtime_law(law, 0, 0), 1.0)
    rng = np.random.default_rng(0)
    drawn = random_runtime_law(7, rng)
    assert drawn.shape == (7, 4)
    assert np.all(drawn >= 0.05) and np.all(drawn <= 0.5)


def test_runtimes_follow_the_law_without_jitter():
    rng = np.random.default_rng(3)
    law = random_runtime_law(4, rng)
    spec = SyntheticSpec(shape=(5, 2, 3, 4), tucker_ranks=(2, 2, 2, 2),
                         runtime_law=law, runtime_jitter=0.0, seed=8)
    corpus = generate_synthetic(spec)
    for i in range(5):
        for e in range(4):
            want = evaluate_runtime_law(law[e], corpus.dataset_sizes[i, 0],
                                        corpus.dataset_sizes[i, 1])
            block = corpus.runtimes[i, :, :, e]
            assert np.allclose(block, want)


def test_censor_by_runtime():
    rng = np.random.default_rng(2)
    truth = rng.uniform(0.1, 0.9, size=(4, 3, 5))
    runtimes = rng.uniform(1.0, 10.0, size=(4, 3, 5))
    everything = censor_by_runtime(truth, runtimes, 100.0)
    assert everything.missing_ratio == 0.0
    assert np.array_equal(everything.data, truth)

    ratios = []
    for threshold in [8.0, 5.0, 3.0, 1.5]:
        obs = censor_by_runtime(truth, runtimes, threshold)
        assert np.array_equal(obs.mask, (runtimes <= threshold).astype(float))
        assert np.array_equal(obs.data, np.where(obs.mask == 1, truth, 0.0))
        ratios.append(obs.missing_ratio)
    assert ratios == sorted(ratios)

    with pytest.raises(ValueError):
        censor_by_runtime(truth, runtimes[:2], 5.0)
    with pytest.raises(ValueError):
        censor_by_runtime(truth, runtimes, 0.0)


def test_censor_uniform_ratio_and_determinism():
    rng = np.random.default_rng(4)
    truth = rng.uniform(size=(10, 10, 100))
    obs = censor_uniform(truth, 0.3, seed=1)
    realized = 1.0 - obs.mask.mean()
    assert abs(realized - 0.3) < 0.02
    again = censor_uniform(truth, 0.3, seed=1)
    assert np.array_equal(obs.mask, again.mask)
    other = censor_uniform(truth, 0.3, seed=2)
    assert not np.array_equal(obs.mask, other.mask)

    full = censor_uniform(truth, 0.0, seed=0)
    assert full.missing_ratio == 0.0


def test_censor_uniform_covers_every_slice():
    rng = np.random.default_rng(6)
    truth = rng.uniform(size=(6, 5, 4))
    obs = censor_uniform(truth, 0.8, seed=3)
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        assert np.all(obs.mask.sum(axis=other) >= 1)
    with pytest.raises(ValueError):
        censor_uniform(truth, 1.0)
    with pytest.raises(ValueError):
        censor_uniform(truth, -0.1)


def test_union_of_quadratics():
    m = generate_union_of_quadratics(20, 40, n_manifolds=2, latent_dim=2, seed=0)
    assert m.shape == (20, 40)
    assert np.isclose(m.min(), 0.0) and np.isclose(m.max(), 1.0)
    again = generate_union_of_quadratics(20, 40, n_manifolds=2, latent_dim=2, seed=0)
    assert np.array_equal(m, again)
    # curved columns are not linearly low-rank
    assert np.linalg.matrix_rank(m, tol=1e-8) > 2


def test_run_completion_method_dispatch():
    rng = np.random.default_rng(7)
    spec = SyntheticSpec(shape=(6, 3, 4), tucker_ranks=(2, 2, 2), seed=7)
    truth = generate_synthetic(spec).truth
    mask = (rng.random(truth.shape) > 0.2).astype(float)
    obs = ObservedTensor(data=truth * mask, mask=mask)

    zero = run_completion_method("zero", truth, mask)
    assert np.array_equal(zero, truth * mask)

    via_name = run_completion_method("em-tucker", obs, None, tucker_ranks=(2, 2, 2))
    direct = em_tucker(obs, (2, 2, 2)).completed
    assert np.array_equal(via_name, direct)

    flat = ObservedTensor(data=(truth * mask)[0], mask=mask[0])
    out = run_completion_method("kfmc", flat, None,
                                kfmc_params={"r": 3, "n_pass": 5})
    assert out.shape == flat.data.shape

    with pytest.raises(ValueError):
        run_completion_method("em-tucker", obs, None)
    with pytest.raises(ValueError):
        run_completion_method("em-matrix", obs, None)
    with pytest.raises(ValueError):
        run_completion_method("kfmc", flat, None, kfmc_params={})
    with pytest.raises(ValueError):
        run_completion_method("nope", obs, None)


def test_compare_completion_methods():
    spec = SyntheticSpec(shape=(8, 3, 5), tucker_ranks=(2, 2, 2), seed=10)
    truth = np.clip(generate_synthetic(spec).truth, 0.05, 1.0)
    masks = {
        "u30": censor_uniform(truth, 0.3, seed=1).mask,
        "u50": censor_uniform(truth, 0.5, seed=2).mask,
    }
    methods = {
        "zero": {},
        "em-tucker": {"tucker_ranks": (2, 2, 2)},
        "em-matrix": {"matrix_rank": 2},
    }
    rows = compare_completion_methods(truth, masks, methods)
    assert len(rows) == 6
    table = {(r.method, r.mask_name): r.hidden_error for r in rows}
    # predicting zeros on strictly positive truth scores exactly 1
    assert np.isclose(table[("zero", "u30")], 1.0)
    assert np.isclose(table[("zero", "u50")], 1.0)
    for key, err in table.items():
        assert np.isfinite(err) and err >= 0
    assert table[("em-tucker", "u30")] < table[("zero", "u30")]

    with pytest.raises(ValueError):
        compare_completion_methods(truth, {"full": np.ones_like(truth)}, methods)


def test_tensor_method_beats_matrix_on_planted_corpora():
    wins = 0
    for seed in range(10):
        spec = SyntheticSpec(shape=(10, 4, 6), tucker_ranks=(3, 2, 2),
                             noise_std=0.0, seed=seed)
        truth = generate_synthetic(spec).truth
        mask = censor_uniform(truth, 0.4, seed=seed + 50).mask
        rows = compare_completion_methods(
            truth, {"m": mask},
            {"em-tucker": {"tucker_ranks": (3, 2, 2)}, "em-matrix": {"matrix_rank": 3}})
        table = {r.method: r.hidden_error for r in rows}
        wins += table["em-tucker"] <= table["em-matrix"]
    assert wins >= 9


def test_baseline_pipeline():
    m = np.array([[0.5, 0.1], [0.3, 0.2]])
    assert baseline_pipeline(m) == 1
    assert baseline_pipeline(np.array([[0.2, 0.2], [0.4, 0.4]])) == 0
    mask = np.array([[1.0, 0.0], [1.0, 1.0]])
    # column 1 mean over its single observed entry: 0.2
    assert baseline_pipeline(np.array([[0.5, 9.0], [0.3, 0.2]]), mask) == 1
    empty_col = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert baseline_pipeline(np.array([[0.9, 0.1], [0.8, 0.1]]), empty_col) == 1


def test_true_error_rank():
    row = [0.3, 0.1, 0.5, 0.1]
    assert true_error_rank(row, 0.05) == 1
    assert true_error_rank(row, 0.1) == 1
    assert true_error_rank(row, 0.3) == 3
    assert true_error_rank(row, 0.9) == 5


def test_evaluate_loo_small_corpus():
    spec = SyntheticSpec(shape=(6, 2, 4), tucker_ranks=(2, 2, 2),
                         noise_std=0.02, seed=21)
    corpus = generate_synthetic(spec)
    folds = evaluate_loo(
        corpus.truth, corpus.runtimes, corpus.dataset_sizes, (2, 2, 2),
        methods=("em-tucker", "zero"), budget_fractions=(0.5, 1.0),
        top_n=8, ensemble_size=2, target_divisor=8.0)
    assert len(folds) == 12

    by_dataset = {}
    for fold in folds:
        assert fold.budget_fractions == [0.5, 1.0]
        assert len(fold.regrets) == 2
        assert all(r >= -1e-12 for r in fold.regrets)
        assert all(rank >= 1 for rank in fold.engine_ranks)
        # a full budget with every pipeline requested reaches the optimum
        assert fold.regrets[1] == 0.0
        assert fold.engine_ranks[1] == 1
        by_dataset.setdefault(fold.dataset_index, []).append(fold)
    for group in by_dataset.values():
        assert len({f.baseline_rank for f in group}) == 1
        assert len({f.global_min for f in group}) == 1


def test_loo_aggregation():
    spec = SyntheticSpec(shape=(5, 2, 3), tucker_ranks=(2, 2, 2), seed=30)
    corpus = generate_synthetic(spec)
    folds = evaluate_loo(
        corpus.truth, corpus.runtimes, corpus.dataset_sizes, (2, 2, 2),
        methods=("em-tucker",), budget_fractions=(0.4, 1.0),
        top_n=6, ensemble_size=2, target_divisor=8.0)

    curves = aggregate_regret_curves(folds)
    assert len(curves) == 1
    curve = curves[0]
    assert curve.method == "em-tucker"
    assert curve.budget_fractions == [0.4, 1.0]
    want = np.mean([f.regrets for f in folds], axis=0)
    assert np.allclose(curve.mean_regrets, want)

    assert mean_engine_rank(folds, "em-tucker", 1.0) == np.mean(
        [f.engine_ranks[1] for f in folds])
    assert mean_baseline_rank(folds, "em-tucker") == np.mean(
        [f.baseline_rank for f in folds])
    with pytest.raises(ValueError):
        mean_engine_rank(folds, "kfmc", 1.0)
    with pytest.raises(ValueError):
        mean_baseline_rank(folds, "kfmc")


def test_evaluate_loo_validation():
    spec = SyntheticSpec(shape=(4, 2, 3), tucker_ranks=(2, 2, 2), seed=1)
    corpus = generate_synthetic(spec)
    with pytest.raises(ValueError):
        evaluate_loo(corpus.truth, corpus.runtimes[:2], corpus.dataset_sizes, (2, 2, 2))
    with pytest.raises(ValueError):
        evaluate_loo(corpus.truth, corpus.runtimes, corpus.dataset_sizes[:2], (2, 2, 2))
    with pytest.raises(ValueError):
        evaluate_loo(corpus.truth, corpus.runtimes, corpus.dataset_sizes, (2, 2, 2),
                     budget_fractions=(0.0, 1.0))
    with pytest.raises(ValueError):
        evaluate_loo(corpus.truth, corpus.runtimes, corpus.dataset_sizes, (2, 2, 2),
                     budget_fractions=(0.5, 1.5))
