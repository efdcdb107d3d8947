"""CSV emission and re-reading for experiment artifacts.

metrics.csv holds the training series, one row per iteration, with the
evaluation columns left blank off the eval cadence.  Floats are written
with repr, so an exact-mode rerun reproduces the file byte for byte and a
reader gets the values back without rounding.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from ..pessimism import penalty_sufficiency, underestimation_gap

__all__ = [
    "METRIC_COLUMNS",
    "SUMMARY_COLUMNS",
    "write_metrics",
    "read_metrics",
    "metrics_rows",
    "write_rows",
    "read_rows",
    "write_summary",
    "summary_row",
    "format_value",
]

METRIC_COLUMNS = ("iteration", "J_train", "C_train_raw", "C_train_penalized",
                  "J_eval", "C_eval", "dual", "mean_upsilon", "max_upsilon")

SUMMARY_COLUMNS = ("name", "seed", "lam", "mode", "J_eval", "C_eval", "budget",
                   "gap", "penalty_sufficiency", "safety", "infeasible",
                   "runtime_s", "env_fingerprint", "config_hash")


def format_value(value) -> str:
    """Canonical cell text: repr for floats, str otherwise, blank for None."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "yes" if value else "no"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def metrics_rows(metrics) -> list[list]:
    """MetricsRecord list -> rows in METRIC_COLUMNS order."""
    rows = []
    for m in metrics:
        rows.append([m.iteration, m.j_train, m.c_train_raw, m.c_train_penalized,
                     m.j_eval, m.c_eval, m.dual, m.mean_upsilon, m.max_upsilon])
    return rows


def write_rows(path, header, rows) -> Path:
    """Write a CSV with canonical cell formatting; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_metrics(path, metrics) -> Path:
    return write_rows(path, METRIC_COLUMNS, metrics_rows(metrics))


def metrics_columns(metrics) -> dict[str, np.ndarray]:
    """MetricsRecord list -> column arrays (NaN standing in for blanks)."""
    rows = metrics_rows(metrics)
    return {name: np.array([math.nan if row[i] is None else float(row[i])
                            for row in rows])
            for i, name in enumerate(METRIC_COLUMNS)}


def read_metrics(path) -> dict[str, np.ndarray]:
    """metrics.csv -> column arrays; blank cells come back as NaN."""
    header, rows = read_rows(path)
    if tuple(header) != METRIC_COLUMNS:
        raise ValueError(f"unexpected metrics header in {path}: {header}")
    cols = {name: [] for name in header}
    for row in rows:
        for name, cell in zip(header, row):
            cols[name].append(float(cell) if cell != "" else math.nan)
    return {name: np.asarray(vals) for name, vals in cols.items()}


def summary_row(config, result, budget: float, fingerprint: str) -> dict:
    """One summary line for a finished run.

    gap is eval cost minus the tail raw training cost (how much the training
    estimate undershot deployment); penalty_sufficiency is the margin by
    which the accumulated penalty covered that gap.
    """
    c_train_raw = result.tail_mean("c_train_raw")
    c_train_pen = result.tail_mean("c_train_penalized")
    gap = underestimation_gap(result.final_c_eval, c_train_raw)
    suff = penalty_sufficiency(c_train_pen, c_train_raw, result.final_c_eval)
    safe = result.final_c_eval <= budget + 1e-9
    return {
        "name": config.name,
        "seed": config.seed,
        "lam": config.lam,
        "mode": config.mode,
        "J_eval": result.final_j_eval,
        "C_eval": result.final_c_eval,
        "budget": budget,
        "gap": gap,
        "penalty_sufficiency": suff,
        "safety": "SAFE" if safe else "UNSAFE",
        "infeasible": bool(result.infeasible),
        "runtime_s": result.runtime_s,
        "env_fingerprint": fingerprint,
        "config_hash": config.config_hash(),
    }


def write_summary(path, rows) -> Path:
    """rows: list of summary_row dicts, written in SUMMARY_COLUMNS order."""
    table = [[row.get(col) for col in SUMMARY_COLUMNS] for row in rows]
    return write_rows(path, SUMMARY_COLUMNS, table)
