"""Cross-setting method comparison: rank-frequency matrices."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class RankingReport:
    """counts[i][j]: how often method i took rank j+1 across settings."""

    methods: tuple[str, ...]
    counts: np.ndarray
    mean_rank: np.ndarray


def build_ranking_report(accuracies, methods: list[str] | None = None
                         ) -> RankingReport:
    """Competition-rank methods per setting (rank 1 = highest accuracy)."""
    table = np.asarray(accuracies, dtype=np.float64)
    if table.ndim != 2:
        raise ShapeError("accuracy table must be settings x methods")
    n_settings, k = table.shape
    if methods is None:
        methods = [f"method{i}" for i in range(k)]
    if len(methods) != k:
        raise ShapeError("method-name count must match table width")

    counts = np.zeros((k, k), dtype=np.int64)
    ranks = np.empty((n_settings, k), dtype=np.int64)
    for s in range(n_settings):
        row = table[s]
        for i in range(k):
            ranks[s, i] = int(np.sum(row > row[i])) + 1
        for i in range(k):
            counts[i, ranks[s, i] - 1] += 1
    mean_rank = ranks.mean(axis=0) if n_settings else np.ones(k)
    return RankingReport(methods=tuple(methods), counts=counts,
                         mean_rank=mean_rank)


def write_ranking_report(report: RankingReport, json_path=None, csv_path=None):
    doc = {
        "methods": list(report.methods),
        "counts": report.counts.tolist(),
        "mean_rank": [float(r) for r in report.mean_rank],
    }
    if json_path is not None:
        Path(json_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            k = len(report.methods)
            w.writerow(["method"] + [f"rank_{j+1}" for j in range(k)]
                       + ["mean_rank"])
            for i, name in enumerate(report.methods):
                w.writerow([name] + report.counts[i].tolist()
                           + [repr(float(report.mean_rank[i]))])
    return doc


def read_accuracy_table(path) -> tuple[np.ndarray, list[str]]:
    """CSV with a header of method names (first column = setting label)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ShapeError("accuracy table needs a header and at least one row")
    methods = rows[0][1:]
    table = []
    for rec in rows[1:]:
        if len(rec) != len(methods) + 1:
            raise ShapeError("ragged accuracy table")
        table.append([float(x) for x in rec[1:]])
    return np.asarray(table, dtype=np.float64), methods
