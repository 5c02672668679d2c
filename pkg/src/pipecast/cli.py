"""Command-line interface.

Subcommands cover the whole workflow: ``generate`` a synthetic corpus,
``complete`` a partially observed tensor, ``design`` a budgeted observation
set, ``select`` pipelines online for one dataset, ``evaluate`` the full
leave-one-out loop, and ``report`` a saved selection run in human-readable
form.

Config precedence is flags over file over defaults: ``--config file.json``
loads overrides, repeated ``--set key=value`` wins over both. Every command
echoes its resolved config to stdout (the run log) as ``config key=value``
lines. Errors print one machine-parsable line to stderr and exit nonzero
(2 for bad input, 1 for unexpected failures); exit code 0 means all outputs
were written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import fileio
from .completion import em_matrix, em_tucker
from .design import DesignPool, select_design
from .factorization import pca_factorize, pipeline_embeddings, tucker_decompose
from .kernel_completion import kfmc_fit
from .runtime import RUNTIME_FLOOR, fit_runtime_models
from .selection import ArrayOracle, SelectionConfig, SelectionContext, run_online
from .synth import (SyntheticSpec, censor_by_runtime, censor_uniform, evaluate_loo,
                    generate_synthetic, mean_baseline_rank, mean_engine_rank)
from .tensors import ObservedTensor, matricize

CONFIG_DEFAULTS = {
    "shape": [20, 4, 12],
    "ranks": [3, 2, 2],
    "noise_std": 0.0,
    "runtime_jitter": 0.1,
    "seed": 0,
    "censor": "none",
    "missing_ratio": 0.3,
    "runtime_threshold": 1.0,
    "censor_seed": 0,
    "method": "em-tucker",
    "methods": ["em-tucker"],
    "matrix_rank": 0,
    "em_max_iter": 1000,
    "em_tol": 1e-4,
    "inner_sweeps": 2,
    "kfmc_r": 10,
    "kfmc_sigma": 0.0,
    "kfmc_beta": 1e-3,
    "kfmc_eta": 0.5,
    "kfmc_lr": 1.0,
    "kfmc_n_batch": 4,
    "kfmc_n_iter": 20,
    "kfmc_n_pass": 200,
    "kfmc_alpha": 1e-6,
    "kfmc_seed": 0,
    "design_budget": 1.0,
    "design_k": 2,
    "total_budget": 1.0,
    "initial_time_target": 0.0,
    "target_divisor": 16.0,
    "initial_rank": 0,
    "energy_fraction": 0.97,
    "top_n": 10,
    "ensemble_size": 5,
    "charge_design_overhead": False,
    "budget_fractions": [0.1, 1.0],
}

_METHOD_CHOICES = ("em-tucker", "em-matrix", "kfmc", "zero")
_CENSOR_CHOICES = ("none", "uniform", "runtime")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return _is_int(v) or isinstance(v, float)


def validate_config(cfg: dict) -> dict:
    """Type- and range-check every key; unknown keys are rejected."""
    for key in cfg:
        if key not in CONFIG_DEFAULTS:
            raise ValueError(f"unknown config key {key!r}")
    out = dict(CONFIG_DEFAULTS)
    out.update(cfg)

    def fail(key, why):
        raise ValueError(f"config {key}={out[key]!r}: {why}")

    for key in ("shape", "ranks"):
        v = out[key]
        if not isinstance(v, list) or not v or not all(_is_int(x) and x >= 1 for x in v):
            fail(key, "must be a nonempty list of positive integers")
    for key in ("seed", "censor_seed", "kfmc_seed"):
        if not _is_int(out[key]):
            fail(key, "must be an integer")
    for key in ("em_max_iter", "inner_sweeps", "kfmc_r", "kfmc_n_batch", "kfmc_n_iter",
                "kfmc_n_pass", "design_k", "top_n", "ensemble_size"):
        if not _is_int(out[key]) or out[key] < 1:
            fail(key, "must be an integer >= 1")
    for key in ("matrix_rank", "initial_rank"):
        if not _is_int(out[key]) or out[key] < 0:
            fail(key, "must be an integer >= 0 (0 means automatic)")
    for key in ("noise_std", "runtime_jitter", "em_tol", "kfmc_alpha", "kfmc_sigma"):
        if not _is_num(out[key]) or out[key] < 0:
            fail(key, "must be a nonnegative number")
    for key in ("runtime_threshold", "kfmc_beta", "kfmc_lr", "design_budget",
                "total_budget", "target_divisor"):
        if not _is_num(out[key]) or out[key] <= 0:
            fail(key, "must be a positive number")
    if not _is_num(out["initial_time_target"]) or out["initial_time_target"] < 0:
        fail("initial_time_target", "must be a nonnegative number (0 means automatic)")
    if not _is_num(out["kfmc_eta"]) or not 0.0 <= out["kfmc_eta"] < 1.0:
        fail("kfmc_eta", "must be in [0, 1)")
    if not _is_num(out["missing_ratio"]) or not 0.0 <= out["missing_ratio"] < 1.0:
        fail("missing_ratio", "must be in [0, 1)")
    if not _is_num(out["energy_fraction"]) or not 0.0 < out["energy_fraction"] <= 1.0:
        fail("energy_fraction", "must be in (0, 1]")
    if out["censor"] not in _CENSOR_CHOICES:
        fail("censor", f"must be one of {_CENSOR_CHOICES}")
    if out["method"] not in _METHOD_CHOICES:
        fail("method", f"must be one of {_METHOD_CHOICES}")
    v = out["methods"]
    if not isinstance(v, list) or not v or not all(m in _METHOD_CHOICES for m in v):
        fail("methods", f"must be a nonempty list from {_METHOD_CHOICES}")
    v = out["budget_fractions"]
    if (not isinstance(v, list) or not v
            or not all(_is_num(x) and 0.0 < x <= 1.0 for x in v)):
        fail("budget_fractions", "must be a nonempty list of numbers in (0, 1]")
    if not isinstance(out["charge_design_overhead"], bool):
        fail("charge_design_overhead", "must be a boolean")
    return out


def resolve_config(args) -> dict:
    """flags > config file > defaults; echoes resolved values to stdout."""
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(fileio.read_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg[key] = value
    resolved = validate_config(cfg)
    for key in sorted(resolved):
        print(f"config {key}={json.dumps(resolved[key])}")
    return resolved


def _add_config_flags(parser):
    parser.add_argument("--config", help="JSON file of config overrides")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="single config override (repeatable; highest precedence)")


def _kfmc_params(cfg) -> dict:
    return {
        "r": cfg["kfmc_r"],
        "sigma": cfg["kfmc_sigma"] or None,
        "beta": cfg["kfmc_beta"],
        "eta": cfg["kfmc_eta"],
        "lr": cfg["kfmc_lr"],
        "n_batch": cfg["kfmc_n_batch"],
        "n_iter": cfg["kfmc_n_iter"],
        "n_pass": cfg["kfmc_n_pass"],
        "alpha": cfg["kfmc_alpha"],
        "seed": cfg["kfmc_seed"],
    }


def cmd_generate(args):
    cfg = resolve_config(args)
    if len(cfg["ranks"]) != len(cfg["shape"]):
        raise ValueError(
            f"config ranks has {len(cfg['ranks'])} entries for an "
            f"order-{len(cfg['shape'])} shape")
    spec = SyntheticSpec(shape=tuple(cfg["shape"]), tucker_ranks=tuple(cfg["ranks"]),
                         noise_std=cfg["noise_std"], runtime_jitter=cfg["runtime_jitter"],
                         seed=cfg["seed"])
    corpus = generate_synthetic(spec)
    fileio.write_tensor_file(args.out_truth, corpus.truth)
    fileio.write_tensor_file(args.out_runtimes, corpus.runtimes)
    fileio.write_sizes_table(args.out_sizes, corpus.dataset_sizes)
    if args.out_runtime_table:
        fileio.write_runtime_table(args.out_runtime_table, matricize(corpus.runtimes, 1))
    if args.out_observed:
        if cfg["censor"] == "uniform":
            obs = censor_uniform(corpus.truth, cfg["missing_ratio"], seed=cfg["censor_seed"])
        elif cfg["censor"] == "runtime":
            obs = censor_by_runtime(corpus.truth, corpus.runtimes, cfg["runtime_threshold"])
        else:
            obs = ObservedTensor(data=corpus.truth, mask=np.ones_like(corpus.truth))
        fileio.write_tensor_file(args.out_observed, obs.data, obs.mask)
    return 0


def _complete_history_text(history) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["iteration", "relative_error"])
    for i, err in enumerate(history):
        writer.writerow([i + 1, fileio.format_float(err)])
    return out.getvalue()


def cmd_complete(args):
    cfg = resolve_config(args)
    obs = fileio.read_tensor_file(args.input)
    method = cfg["method"]
    history = []
    if method == "em-tucker":
        ranks = cfg["ranks"]
        if len(ranks) != obs.data.ndim:
            raise ValueError(
                f"config ranks has {len(ranks)} entries for an order-{obs.data.ndim} input")
        result = em_tucker(obs, ranks, max_iter=cfg["em_max_iter"], tol=cfg["em_tol"],
                           inner_sweeps=cfg["inner_sweeps"])
        completed, history = result.completed, result.error_history
    elif method == "em-matrix":
        rank = cfg["matrix_rank"] or cfg["ranks"][0]
        result = em_matrix(obs, rank, max_iter=cfg["em_max_iter"], tol=cfg["em_tol"])
        completed, history = result.completed, result.error_history
    elif method == "kfmc":
        if obs.data.ndim != 2:
            raise ValueError(f"kfmc completes matrices, got an order-{obs.data.ndim} input")
        result = kfmc_fit(obs, **_kfmc_params(cfg))
        completed, history = result.completed, result.objective_history
    else:
        completed = obs.data * obs.mask
    fileio.write_tensor_file(args.out, completed)
    if args.out_history:
        fileio.atomic_write_text(args.out_history, _complete_history_text(history))
    if args.out_embeddings or args.out_singular_values:
        if completed.ndim > 2:
            factors = tucker_decompose(completed, cfg["ranks"])
            model = pipeline_embeddings(factors)
            emb, sv = model.pipeline_embeddings, model.singular_values
        else:
            rank = cfg["matrix_rank"] or cfg["ranks"][0]
            pca = pca_factorize(completed, rank=rank)
            emb, sv = pca.y, pca.singular_values
        if args.out_embeddings:
            fileio.write_tensor_file(args.out_embeddings, emb)
        if args.out_singular_values:
            fileio.write_tensor_file(args.out_singular_values, sv)
    return 0


def cmd_design(args):
    cfg = resolve_config(args)
    embeddings = fileio.read_dense_tensor(args.embeddings)
    if embeddings.ndim != 2:
        raise ValueError(f"embeddings must be a matrix, got order {embeddings.ndim}")
    runtimes = fileio.read_predicted_runtimes(args.runtimes)
    if runtimes.size != embeddings.shape[1]:
        raise ValueError(
            f"got {runtimes.size} runtimes for {embeddings.shape[1]} embedding columns")
    pool = DesignPool(embeddings=embeddings, runtimes=runtimes)
    selected, fallback = select_design(pool, cfg["design_budget"], cfg["design_k"])
    lines = ["design-selection v1", f"fallback {int(fallback)}",
             "selected " + " ".join(str(j) for j in selected)]
    fileio.atomic_write_text(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_select(args):
    cfg = resolve_config(args)
    embeddings = fileio.read_dense_tensor(args.embeddings)
    if embeddings.ndim != 2:
        raise ValueError(f"embeddings must be a matrix, got order {embeddings.ndim}")
    sv = fileio.read_dense_tensor(args.singular_values).ravel()
    errors = fileio.read_dense_tensor(args.oracle_errors).ravel()
    true_rt = fileio.read_dense_tensor(args.oracle_runtimes).ravel()
    n_pipelines = embeddings.shape[1]
    if errors.size != n_pipelines:
        raise ValueError(
            f"oracle errors cover {errors.size} pipelines, embeddings {n_pipelines}")
    if true_rt.size != n_pipelines:
        raise ValueError(
            f"oracle runtimes cover {true_rt.size} pipelines, embeddings {n_pipelines}")
    train_rt, train_mask = fileio.read_runtime_table(args.train_runtimes)
    sizes = fileio.read_sizes_table(args.train_sizes)
    if sizes.shape[0] != train_rt.shape[0]:
        raise ValueError(
            f"sizes table has {sizes.shape[0]} datasets, runtime table {train_rt.shape[0]}")
    models = fit_runtime_models(train_rt, sizes, mask=train_mask)
    predicted = np.array([
        m.predict_one(args.n_points, args.n_features) if m is not None else RUNTIME_FLOOR
        for m in models])
    if predicted.size != embeddings.shape[1]:
        raise ValueError(
            f"runtime table covers {predicted.size} pipelines, embeddings "
            f"{embeddings.shape[1]}")
    ctx = SelectionContext(pipeline_embeddings=embeddings, singular_values=sv,
                           predicted_runtimes=predicted,
                           oracle=ArrayOracle(errors=errors, runtimes=true_rt))
    target = cfg["initial_time_target"] or cfg["total_budget"] / cfg["target_divisor"]
    config = SelectionConfig(
        total_budget=cfg["total_budget"], initial_time_target=target,
        initial_rank=cfg["initial_rank"] or None, energy_fraction=cfg["energy_fraction"],
        top_n=cfg["top_n"], ensemble_size=cfg["ensemble_size"],
        charge_design_overhead=cfg["charge_design_overhead"])
    report = run_online(ctx, config)
    fileio.write_report(args.out, report)
    return 0


def cmd_evaluate(args):
    cfg = resolve_config(args)
    truth = fileio.read_dense_tensor(args.truth)
    runtimes = fileio.read_dense_tensor(args.runtimes)
    sizes = fileio.read_sizes_table(args.sizes)
    observed_mask = None
    if args.observed:
        obs = fileio.read_tensor_file(args.observed)
        if obs.shape != truth.shape:
            raise ValueError(
                f"observed tensor shape {obs.shape} does not match truth {truth.shape}")
        observed_mask = obs.mask
    folds = evaluate_loo(
        truth, runtimes, sizes, tucker_ranks=cfg["ranks"], methods=tuple(cfg["methods"]),
        budget_fractions=tuple(cfg["budget_fractions"]), observed_mask=observed_mask,
        initial_rank=cfg["initial_rank"] or None, energy_fraction=cfg["energy_fraction"],
        top_n=cfg["top_n"], ensemble_size=cfg["ensemble_size"],
        target_divisor=cfg["target_divisor"], kfmc_params=_kfmc_params(cfg),
        em_max_iter=cfg["em_max_iter"], em_tol=cfg["em_tol"])

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["dataset", "method", "fraction", "regret", "engine_rank",
                     "baseline_rank", "best_error", "global_min"])
    for fold in folds:
        for i, frac in enumerate(fold.budget_fractions):
            writer.writerow([
                fold.dataset_index, fold.method, fileio.format_float(frac),
                fileio.format_float(fold.regrets[i]), fold.engine_ranks[i],
                fold.baseline_rank, fileio.format_float(fold.best_errors[i]),
                fileio.format_float(fold.global_min)])
    fileio.atomic_write_text(args.out_folds, out.getvalue())

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["method", "fraction", "mean_regret", "mean_engine_rank",
                     "mean_baseline_rank"])
    for method in cfg["methods"]:
        group = [f for f in folds if f.method == method]
        for i, frac in enumerate(cfg["budget_fractions"]):
            mean_regret = float(np.mean([f.regrets[i] for f in group]))
            writer.writerow([
                method, fileio.format_float(frac), fileio.format_float(mean_regret),
                fileio.format_float(mean_engine_rank(folds, method, frac)),
                fileio.format_float(mean_baseline_rank(folds, method))])
    fileio.atomic_write_text(args.out_summary, out.getvalue())
    return 0


def cmd_report(args):
    report = fileio.read_report(args.input)
    lines = [
        f"selection run: {len(report.rounds)} rounds, "
        f"budget spent {fileio.format_float(report.budget_spent)} "
        f"of {fileio.format_float(report.config.total_budget)}"]
    observed = {}
    for rnd in report.rounds:
        observed.update(rnd.observed_errors)
    if observed:
        best = min(observed.items(), key=lambda kv: (kv[1], kv[0]))
        lines.append(f"best observed pipeline: {best[0]} (error {fileio.format_float(best[1])})")
    else:
        lines.append("best observed pipeline: none observed")
    lines.append("final ensemble: " + (" ".join(str(j) for j in report.final_ensemble) or "empty"))
    for rnd in report.rounds:
        lines.append(
            f"round {rnd.round_index}: target {fileio.format_float(rnd.time_target)} "
            f"rank {rnd.rank_used} designed {len(rnd.designed_set)} "
            f"observed {len(rnd.observed_errors)} "
            f"validation {fileio.format_float(rnd.validation_error)}"
            + (" (fallback)" if rnd.fallback else ""))
    text = "\n".join(lines) + "\n"
    if args.out:
        fileio.atomic_write_text(args.out, text)
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipecast",
        description="budgeted pipeline selection via low-rank performance models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a planted synthetic corpus")
    p.add_argument("--out-truth", required=True)
    p.add_argument("--out-runtimes", required=True)
    p.add_argument("--out-sizes", required=True)
    p.add_argument("--out-runtime-table", help="also write the mode-1 runtime CSV")
    p.add_argument("--out-observed", help="also write a censored view of the truth")
    _add_config_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("complete", help="complete a partially observed tensor")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-history", help="per-iteration fit history CSV")
    p.add_argument("--out-embeddings", help="also factorize and write pipeline embeddings")
    p.add_argument("--out-singular-values", help="write mode-1 singular values")
    _add_config_flags(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("design", help="pick a budgeted informative pipeline set")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--runtimes", required=True, help="pipeline,seconds CSV of predictions")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("select", help="run online selection for one dataset")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--singular-values", required=True)
    p.add_argument("--train-runtimes", required=True, help="dataset,pipeline,seconds CSV")
    p.add_argument("--train-sizes", required=True, help="dataset,n_points,n_features CSV")
    p.add_argument("--oracle-errors", required=True, help="order-1 tensor file")
    p.add_argument("--oracle-runtimes", required=True, help="order-1 tensor file")
    p.add_argument("--n-points", type=int, required=True)
    p.add_argument("--n-features", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="leave-one-dataset-out evaluation")
    p.add_argument("--truth", required=True)
    p.add_argument("--runtimes", required=True)
    p.add_argument("--sizes", required=True)
    p.add_argument("--observed", help="censored meta-training view (tensor file)")
    p.add_argument("--out-folds", required=True)
    p.add_argument("--out-summary", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarize a saved selection report")
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="write the summary here instead of stdout")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error kind={type(exc).__name__} {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - unexpected failures
        print(f"error kind={type(exc).__name__} {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
