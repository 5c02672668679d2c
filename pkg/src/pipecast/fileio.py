"""File formats: sparse tensor files, delimited tables, config, reports.

All writers are atomic (write to a temp file in the target directory, then
rename), so a crashed run never leaves a partial output at the final path.
Floats are serialized with ``repr`` (shortest decimal that round-trips), so
rewriting parsed data reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

from .selection import RoundLog, SelectionConfig, SelectionReport
from .tensors import ObservedTensor
from .validation import MAX_ORDER, check_mask, check_tensor

TENSOR_TAG = "tensorfile"
TENSOR_VERSION = "v1"
REPORT_TAG = "selection-report"
REPORT_VERSION = "v1"
RUNTIME_HEADER = ["dataset", "pipeline", "seconds"]
SIZES_HEADER = ["dataset", "n_points", "n_features"]
PREDICTED_HEADER = ["pipeline", "seconds"]


class TensorFormatError(ValueError):
    """Malformed tensor file; carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class TableFormatError(ValueError):
    """Malformed delimited table; carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def atomic_write_text(path, text: str):
    """Write text to ``path`` via a same-directory temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp.", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def format_float(x: float) -> str:
    return repr(float(x))


def tensor_file_text(data, mask=None) -> str:
    """Render a (possibly partially observed) tensor as text: a format/
    version line, a shape line, then one observed entry per line as
    zero-based indices followed by the value."""
    data = check_tensor(data, "data")
    if mask is None:
        mask = np.ones_like(data)
    mask = check_mask(mask, data.shape)
    lines = [f"{TENSOR_TAG} {TENSOR_VERSION}",
             "shape " + " ".join(str(d) for d in data.shape)]
    for idx in np.argwhere(mask == 1.0):
        value = data[tuple(idx)]
        lines.append(" ".join(str(int(i)) for i in idx) + " " + format_float(value))
    return "\n".join(lines) + "\n"


def write_tensor_file(path, data, mask=None):
    atomic_write_text(path, tensor_file_text(data, mask))


def parse_tensor_text(text: str) -> ObservedTensor:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TensorFormatError("empty file: missing header", line=1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != TENSOR_TAG:
        raise TensorFormatError(
            f"expected header '{TENSOR_TAG} {TENSOR_VERSION}', got {lines[0]!r}", line=1)
    if head[1] != TENSOR_VERSION:
        raise TensorFormatError(f"unsupported version {head[1]!r}", line=1)
    if len(lines) < 2:
        raise TensorFormatError("missing shape line", line=2)
    shape_parts = lines[1].split()
    if not shape_parts or shape_parts[0] != "shape":
        raise TensorFormatError(f"expected 'shape ...', got {lines[1]!r}", line=2)
    try:
        shape = tuple(int(p) for p in shape_parts[1:])
    except ValueError:
        raise TensorFormatError(f"non-integer extent in {lines[1]!r}", line=2) from None
    if not 1 <= len(shape) <= MAX_ORDER:
        raise TensorFormatError(
            f"order must be in [1, {MAX_ORDER}], got {len(shape)}", line=2)
    if any(d < 1 for d in shape):
        raise TensorFormatError(f"extents must be >= 1, got {shape}", line=2)

    data = np.zeros(shape)
    mask = np.zeros(shape)
    order = len(shape)
    for lineno, raw in enumerate(lines[2:], start=3):
        parts = raw.split()
        if len(parts) != order + 1:
            raise TensorFormatError(
                f"expected {order} indices and a value, got {len(parts)} fields",
                line=lineno)
        try:
            idx = tuple(int(p) for p in parts[:order])
        except ValueError:
            raise TensorFormatError(f"non-integer index in {raw!r}", line=lineno) from None
        for axis, (i, d) in enumerate(zip(idx, shape)):
            if not 0 <= i < d:
                raise TensorFormatError(
                    f"index {i} out of range [0, {d}) on mode {axis + 1}", line=lineno)
        try:
            value = float(parts[order])
        except ValueError:
            raise TensorFormatError(f"non-numeric value {parts[order]!r}", line=lineno) from None
        if not np.isfinite(value):
            raise TensorFormatError(f"non-finite value {parts[order]!r}", line=lineno)
        if mask[idx] == 1.0:
            raise TensorFormatError(f"duplicate entry at indices {idx}", line=lineno)
        data[idx] = value
        mask[idx] = 1.0
    return ObservedTensor(data=data, mask=mask)


def read_tensor_file(path) -> ObservedTensor:
    with open(path, "r", newline="") as f:
        return parse_tensor_text(f.read())


def read_dense_tensor(path) -> np.ndarray:
    obs = read_tensor_file(path)
    if obs.n_observed != obs.mask.size:
        raise TensorFormatError(
            f"{path}: expected a fully observed tensor, "
            f"{obs.mask.size - obs.n_observed} entries missing")
    return obs.data


def _read_table(path, header):
    with open(path, "r", newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise TableFormatError("empty file: missing header", line=1)
    if rows[0] != header:
        raise TableFormatError(
            f"expected header {','.join(header)!r}, got {','.join(rows[0])!r}", line=1)
    return rows[1:]


def runtime_table_text(runtimes, mask=None) -> str:
    """CSV with header dataset,pipeline,seconds; one row per observed run."""
    runtimes = np.asarray(runtimes, dtype=np.float64)
    if runtimes.ndim != 2:
        raise ValueError(f"runtimes must be 2-d, got order {runtimes.ndim}")
    if mask is None:
        mask = np.ones_like(runtimes)
    mask = check_mask(mask, runtimes.shape)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(RUNTIME_HEADER)
    for d, p in np.argwhere(mask == 1.0):
        writer.writerow([int(d), int(p), format_float(runtimes[d, p])])
    return out.getvalue()


def write_runtime_table(path, runtimes, mask=None):
    atomic_write_text(path, runtime_table_text(runtimes, mask))


def read_runtime_table(path):
    """Returns (runtimes, mask) with shapes inferred from the max indices."""
    body = _read_table(path, RUNTIME_HEADER)
    entries = {}
    for lineno, row in enumerate(body, start=2):
        if len(row) != 3:
            raise TableFormatError(f"expected 3 fields, got {len(row)}", line=lineno)
        try:
            d, p = int(row[0]), int(row[1])
            seconds = float(row[2])
        except ValueError:
            raise TableFormatError(f"malformed row {row!r}", line=lineno) from None
        if d < 0 or p < 0:
            raise TableFormatError(f"negative index in row {row!r}", line=lineno)
        if not np.isfinite(seconds) or seconds <= 0:
            raise TableFormatError(f"seconds must be positive, got {row[2]!r}", line=lineno)
        if (d, p) in entries:
            raise TableFormatError(f"duplicate entry for dataset {d}, pipeline {p}",
                                   line=lineno)
        entries[(d, p)] = seconds
    if not entries:
        raise TableFormatError("table has no data rows")
    n_d = max(d for d, _ in entries) + 1
    n_p = max(p for _, p in entries) + 1
    runtimes = np.zeros((n_d, n_p))
    mask = np.zeros((n_d, n_p))
    for (d, p), seconds in entries.items():
        runtimes[d, p] = seconds
        mask[d, p] = 1.0
    return runtimes, mask


def sizes_table_text(sizes) -> str:
    sizes = np.asarray(sizes)
    if sizes.ndim != 2 or sizes.shape[1] != 2:
        raise ValueError(f"sizes must be (n_datasets, 2), got {sizes.shape}")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SIZES_HEADER)
    for d in range(sizes.shape[0]):
        writer.writerow([d, int(sizes[d, 0]), int(sizes[d, 1])])
    return out.getvalue()


def write_sizes_table(path, sizes):
    atomic_write_text(path, sizes_table_text(sizes))


def read_sizes_table(path) -> np.ndarray:
    body = _read_table(path, SIZES_HEADER)
    seen = {}
    for lineno, row in enumerate(body, start=2):
        if len(row) != 3:
            raise TableFormatError(f"expected 3 fields, got {len(row)}", line=lineno)
        try:
            d, n, p = int(row[0]), int(row[1]), int(row[2])
        except ValueError:
            raise TableFormatError(f"malformed row {row!r}", line=lineno) from None
        if d < 0:
            raise TableFormatError(f"negative dataset index {d}", line=lineno)
        if n < 1 or p < 1:
            raise TableFormatError(f"sizes must be >= 1, got {row!r}", line=lineno)
        if d in seen:
            raise TableFormatError(f"duplicate size row for dataset {d}", line=lineno)
        seen[d] = (n, p)
    if not seen:
        raise TableFormatError("table has no data rows")
    n_datasets = max(seen) + 1
    missing = [d for d in range(n_datasets) if d not in seen]
    if missing:
        raise TableFormatError(f"missing size rows for datasets {missing}")
    return np.array([seen[d] for d in range(n_datasets)], dtype=int)


def predicted_runtimes_text(seconds) -> str:
    seconds = np.asarray(seconds, dtype=np.float64)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(PREDICTED_HEADER)
    for j, s in enumerate(seconds):
        writer.writerow([j, format_float(s)])
    return out.getvalue()


def write_predicted_runtimes(path, seconds):
    atomic_write_text(path, predicted_runtimes_text(seconds))


def read_predicted_runtimes(path) -> np.ndarray:
    body = _read_table(path, PREDICTED_HEADER)
    seen = {}
    for lineno, row in enumerate(body, start=2):
        if len(row) != 2:
            raise TableFormatError(f"expected 2 fields, got {len(row)}", line=lineno)
        try:
            j, s = int(row[0]), float(row[1])
        except ValueError:
            raise TableFormatError(f"malformed row {row!r}", line=lineno) from None
        if j < 0:
            raise TableFormatError(f"negative pipeline index {j}", line=lineno)
        if not np.isfinite(s) or s <= 0:
            raise TableFormatError(f"seconds must be positive, got {row[1]!r}", line=lineno)
        if j in seen:
            raise TableFormatError(f"duplicate row for pipeline {j}", line=lineno)
        seen[j] = s
    if not seen:
        raise TableFormatError("table has no data rows")
    n = max(seen) + 1
    missing = [j for j in range(n) if j not in seen]
    if missing:
        raise TableFormatError(f"missing rows for pipelines {missing}")
    return np.array([seen[j] for j in range(n)])


def read_config_file(path) -> dict:
    """Flat JSON object of config overrides."""
    with open(path, "r") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise TableFormatError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise TableFormatError("config must be a JSON object of key/value pairs")
    return raw


def _int_list_line(name, values) -> str:
    return name + ("" if len(values) == 0 else " " + " ".join(str(int(v)) for v in values))


def _float_list_line(name, values) -> str:
    values = np.asarray(values, dtype=np.float64).ravel()
    return name + ("" if values.size == 0 else " " + " ".join(format_float(v) for v in values))


def report_text(report: SelectionReport) -> str:
    """Structured text for a selection report: header, config echo, then one
    block per round. Predicted errors are clamped to [0, 1] here."""
    cfg = report.config
    lines = [f"{REPORT_TAG} {REPORT_VERSION}",
             "budget_spent " + format_float(report.budget_spent),
             _int_list_line("final_ranking", report.final_ranking),
             _int_list_line("final_ensemble", report.final_ensemble),
             "config total_budget " + format_float(cfg.total_budget),
             "config initial_time_target " + format_float(cfg.initial_time_target),
             "config initial_rank " + str(cfg.initial_rank if cfg.initial_rank else 0),
             "config energy_fraction " + format_float(cfg.energy_fraction),
             "config top_n " + str(cfg.top_n),
             "config ensemble_size " + str(cfg.ensemble_size),
             "config charge_design_overhead " + str(int(cfg.charge_design_overhead)),
             "rounds " + str(len(report.rounds))]
    for rnd in report.rounds:
        obs = " ".join(f"{j}:{format_float(rnd.observed_errors[j])}"
                       for j in sorted(rnd.observed_errors))
        lines.extend([
            "round " + str(rnd.round_index),
            "time_target " + format_float(rnd.time_target),
            "rank_used " + str(rnd.rank_used),
            "fallback " + str(int(rnd.fallback)),
            _int_list_line("designed", rnd.designed_set),
            ("observed " + obs) if obs else "observed",
            _int_list_line("newly_observed", rnd.newly_observed),
            _float_list_line("embedding", rnd.estimated_embedding),
            _float_list_line("predicted", np.clip(rnd.predicted_errors, 0.0, 1.0)),
            _int_list_line("top_candidates", rnd.top_candidates),
            _int_list_line("ensemble", rnd.ensemble_members),
            "validation_error " + format_float(rnd.validation_error),
            "end",
        ])
    return "\n".join(lines) + "\n"


def write_report(path, report: SelectionReport):
    atomic_write_text(path, report_text(report))


class _ReportParser:
    def __init__(self, text):
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0

    def next_line(self, expect_key=None):
        if self.pos >= len(self.lines):
            raise TableFormatError("unexpected end of report", line=self.pos + 1)
        raw = self.lines[self.pos]
        self.pos += 1
        parts = raw.split()
        if expect_key is not None:
            if not parts or parts[0] != expect_key:
                raise TableFormatError(f"expected {expect_key!r}, got {raw!r}", line=self.pos)
            return parts[1:]
        return parts


def parse_report_text(text: str) -> SelectionReport:
    p = _ReportParser(text)
    head = p.next_line()
    if head[:1] != [REPORT_TAG] or head[1:] != [REPORT_VERSION]:
        raise TableFormatError(f"expected '{REPORT_TAG} {REPORT_VERSION}' header", line=1)
    budget_spent = float(p.next_line("budget_spent")[0])
    final_ranking = [int(v) for v in p.next_line("final_ranking")]
    final_ensemble = [int(v) for v in p.next_line("final_ensemble")]
    cfg_values = {}
    for _ in range(7):
        parts = p.next_line("config")
        cfg_values[parts[0]] = parts[1]
    config = SelectionConfig(
        total_budget=float(cfg_values["total_budget"]),
        initial_time_target=float(cfg_values["initial_time_target"]),
        initial_rank=(int(cfg_values["initial_rank"]) or None),
        energy_fraction=float(cfg_values["energy_fraction"]),
        top_n=int(cfg_values["top_n"]),
        ensemble_size=int(cfg_values["ensemble_size"]),
        charge_design_overhead=bool(int(cfg_values["charge_design_overhead"])))
    n_rounds = int(p.next_line("rounds")[0])
    rounds = []
    for _ in range(n_rounds):
        idx = int(p.next_line("round")[0])
        time_target = float(p.next_line("time_target")[0])
        rank_used = int(p.next_line("rank_used")[0])
        fallback = bool(int(p.next_line("fallback")[0]))
        designed = [int(v) for v in p.next_line("designed")]
        observed = {}
        for pair in p.next_line("observed"):
            j, _, v = pair.partition(":")
            observed[int(j)] = float(v)
        newly = [int(v) for v in p.next_line("newly_observed")]
        embedding = np.array([float(v) for v in p.next_line("embedding")])
        predicted = np.array([float(v) for v in p.next_line("predicted")])
        top = [int(v) for v in p.next_line("top_candidates")]
        ensemble = [int(v) for v in p.next_line("ensemble")]
        validation = float(p.next_line("validation_error")[0])
        p.next_line("end")
        rounds.append(RoundLog(
            round_index=idx, time_target=time_target, rank_used=rank_used,
            designed_set=designed, observed_errors=observed, newly_observed=newly,
            estimated_embedding=embedding, predicted_errors=predicted,
            top_candidates=top, ensemble_members=ensemble,
            validation_error=validation, fallback=fallback))
    return SelectionReport(rounds=rounds, final_ranking=final_ranking,
                           final_ensemble=final_ensemble, budget_spent=budget_spent,
                           config=config)


def read_report(path) -> SelectionReport:
    with open(path, "r", newline="") as f:
        return parse_report_text(f.read())
