"""Unsupervised model-quality criteria and rank aggregation.

Seven criteria score one model's behavior on an unlabeled validation set:
four clustering-agreement measures (AMI, ARI, V-Measure, FMI) between the
model's predictions and a k-means clustering of its features, a dispersion
ratio (CHI) of features grouped by prediction, the effective rank of the
feature matrix (RankMe), and the nuclear norm of the prediction-probability
matrix (BNM). Higher is better for all seven. Models are compared by
competition-ranking each criterion column and averaging ranks per model;
the lowest average rank wins.

All criterion math runs in float64 regardless of on-disk storage precision.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, TooFewPointsError
from .heads import ModelOutputs, softmax

CRITERIA = ("RankMe", "AMI", "ARI", "VMeasure", "FMI", "CHI", "BNM")


@dataclass(frozen=True)
class ValidatorScore:
    """One criterion's value for one model; ``undefined`` marks incomputable."""

    criterion: str
    value: float
    higher_is_better: bool = True
    undefined: bool = False


@dataclass(frozen=True)
class ClusterAssignment:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float


# ---------------------------------------------------------------------------
# k-means (deterministic, single restart)
# ---------------------------------------------------------------------------

def _sq_distances_to(X: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = X - center
    return np.einsum("ij,ij->i", diff, diff)


def _kmeans_pp_seed(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(0, n))
    centers[0] = X[first]
    closest = _sq_distances_to(X, centers[0])
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(0, n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[j] = X[idx]
        closest = np.minimum(closest, _sq_distances_to(X, centers[j]))
    return centers


def kmeans(features: np.ndarray, k: int, seed: int,
           max_iter: int = 300) -> ClusterAssignment:
    """Lloyd iterations from k-means++ seeding until the assignment fixpoint.

    A cluster that empties is re-seeded to the point farthest from its
    current centroid (ties to the lowest row index), then iteration resumes.
    """
    X = np.ascontiguousarray(features, dtype=np.float64)
    n = X.shape[0]
    if k < 1:
        raise ShapeError("k must be >= 1")
    if k > n:
        raise TooFewPointsError(f"too few points: n={n} < k={k}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_seed(X, k, rng)

    assignments = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        # squared distance of every point to every centroid
        diff = X[:, None, :] - centroids[None, :, :]
        d2 = np.einsum("nkd,nkd->nk", diff, diff)
        new_assign = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(n), new_assign]
        for j in range(k):
            if not np.any(new_assign == j):
                far = int(np.argmax(point_d2))
                new_assign[far] = j
                point_d2[far] = 0.0
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for j in range(k):
            members = X[assignments == j]
            if len(members):
                centroids[j] = members.mean(axis=0)

    diff = X - centroids[assignments]
    inertia = float(np.einsum("ij,ij->", diff, diff))
    return ClusterAssignment(assignments=assignments, centroids=centroids,
                             inertia=inertia)


# ---------------------------------------------------------------------------
# agreement measures between two labelings
# ---------------------------------------------------------------------------

def _contingency(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError("labelings must be equal-length 1-D vectors")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    r, c = ai.max() + 1, bi.max() + 1
    table = np.zeros((r, c), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    n = counts.sum()
    probs = counts[counts > 0] / n
    return float(-np.sum(probs * np.log(probs)))


def _mutual_information(table: np.ndarray) -> float:
    n = table.sum()
    ai = table.sum(axis=1)
    bj = table.sum(axis=0)
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij > 0:
                mi += (nij / n) * math.log(n * nij / (ai[i] * bj[j]))
    return mi


def _expected_mi(table: np.ndarray) -> float:
    """Exact expectation of MI under the hypergeometric null.

    Sums, for every cell, the MI contribution of each feasible cell count
    weighted by its hypergeometric probability (log-gamma arithmetic).
    """
    n = int(table.sum())
    ai = table.sum(axis=1).astype(np.int64)
    bj = table.sum(axis=0).astype(np.int64)
    lg = math.lgamma
    log_n_fact = lg(n + 1)
    emi = 0.0
    for a in ai:
        for b in bj:
            lo = max(1, a + b - n)
            hi = min(a, b)
            for nij in range(lo, hi + 1):
                term = (nij / n) * math.log(n * nij / (a * b))
                log_weight = (
                    lg(a + 1) + lg(b + 1) + lg(n - a + 1) + lg(n - b + 1)
                    - log_n_fact - lg(nij + 1) - lg(a - nij + 1)
                    - lg(b - nij + 1) - lg(n - a - b + nij + 1)
                )
                emi += term * math.exp(log_weight)
    return emi


def ami(a, b) -> float:
    """Adjusted mutual information with arithmetic-mean normalization.

    Returns 0 by convention when the normalizer equals the expected MI
    (either labeling constant).
    """
    table = _contingency(a, b)
    mi = _mutual_information(table)
    emi = _expected_mi(table)
    h_a = _entropy(table.sum(axis=1))
    h_b = _entropy(table.sum(axis=0))
    denom = 0.5 * (h_a + h_b) - emi
    if abs(denom) < 1e-15:
        return 0.0
    return (mi - emi) / denom


def _pair_counts(table: np.ndarray):
    def comb2(x):
        return x * (x - 1) // 2

    same_both = int(sum(comb2(int(v)) for v in table.ravel()))
    same_a = int(sum(comb2(int(v)) for v in table.sum(axis=1)))
    same_b = int(sum(comb2(int(v)) for v in table.sum(axis=0)))
    return same_both, same_a, same_b


def ari(a, b) -> float:
    """Adjusted Rand index from contingency pair counts; nan when n < 2."""
    table = _contingency(a, b)
    n = int(table.sum())
    if n < 2:
        return math.nan
    same_both, same_a, same_b = _pair_counts(table)
    total_pairs = n * (n - 1) // 2
    expected = same_a * same_b / total_pairs
    maximum = 0.5 * (same_a + same_b)
    if maximum == expected:
        # both partitions induce identical pair structure (e.g. both trivial)
        return 1.0
    return (same_both - expected) / (maximum - expected)


def v_measure(a, b) -> float:
    """Harmonic mean of the two normalized conditional-entropy complements."""
    table = _contingency(a, b)
    h_a = _entropy(table.sum(axis=1))
    h_b = _entropy(table.sum(axis=0))
    mi = _mutual_information(table)
    hom = 1.0 if h_a == 0.0 else mi / h_a
    com = 1.0 if h_b == 0.0 else mi / h_b
    if hom + com == 0.0:
        return 0.0
    return 2.0 * hom * com / (hom + com)


def fmi(a, b) -> float:
    """Geometric mean of pairwise precision and recall; 0 when undefined."""
    table = _contingency(a, b)
    n = int(table.sum())
    if n < 2:
        raise ShapeError("fmi requires n >= 2")
    tp, same_a, same_b = _pair_counts(table)
    if same_a == 0 or same_b == 0:
        return 0.0
    return tp / math.sqrt(same_a * same_b)


# ---------------------------------------------------------------------------
# feature / probability criteria
# ---------------------------------------------------------------------------

def chi(features: np.ndarray, groups) -> float:
    """Between-group vs within-group dispersion ratio.

    Zero within-group scatter scores +inf (a perfect grouping ranks best);
    fewer than two non-empty groups is nan (incomputable).
    """
    X = np.asarray(features, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.int64)
    if X.shape[0] != groups.shape[0]:
        raise ShapeError("features and groups must have equal length")
    uniq = np.unique(groups)
    k = len(uniq)
    n = X.shape[0]
    if k < 2 or n <= k:
        return math.nan
    overall = X.mean(axis=0)
    between = 0.0
    within = 0.0
    for g in uniq:
        members = X[groups == g]
        center = members.mean(axis=0)
        between += len(members) * float(np.sum((center - overall) ** 2))
        within += float(np.sum((members - center) ** 2))
    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


def rankme(features: np.ndarray, epsilon: float = 1e-7) -> float:
    """Effective rank: exp-entropy of the normalized singular-value spectrum.

    With epsilon=0 the score is exactly scale-invariant and equals r for a
    matrix with r equal nonzero singular values. nan for an all-zero matrix.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.size == 0:
        return math.nan
    sigma = np.linalg.svd(X, compute_uv=False)
    total = sigma.sum()
    if total == 0.0:
        return math.nan
    p = sigma / total + epsilon
    p = p / p.sum()
    p = p[p > 0]
    return float(np.exp(-np.sum(p * np.log(p))))


def bnm(probabilities: np.ndarray) -> float:
    """Nuclear norm of the full prediction-probability matrix."""
    P = np.asarray(probabilities, dtype=np.float64)
    if P.ndim != 2:
        raise ShapeError("probability matrix must be 2-D")
    if np.any(P < -1e-9) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-6:
        raise ShapeError("rows must be non-negative and sum to 1 within 1e-6")
    return float(np.linalg.svd(P, compute_uv=False).sum())


# ---------------------------------------------------------------------------
# scoring one model and aggregating many
# ---------------------------------------------------------------------------

def score_model(outputs: ModelOutputs, class_count: int, seed: int,
                rankme_epsilon: float = 1e-7,
                cluster_k: int | None = None) -> list[ValidatorScore]:
    """All seven criteria for one model's validation-set outputs.

    Cluster labels come from k-means on the features with k = class_count
    (overridable); the agreement measures compare them to the predictions.
    """
    k = class_count if cluster_k is None else cluster_k
    preds = outputs.predictions
    clusters = kmeans(outputs.features, k, seed).assignments
    probs = softmax(outputs.logits)
    values = {
        "RankMe": rankme(outputs.features, epsilon=rankme_epsilon),
        "AMI": ami(preds, clusters),
        "ARI": ari(preds, clusters),
        "VMeasure": v_measure(preds, clusters),
        "FMI": fmi(preds, clusters),
        "CHI": chi(outputs.features, preds),
        "BNM": bnm(probs),
    }
    return [ValidatorScore(name, values[name], undefined=math.isnan(values[name]))
            for name in CRITERIA]


@dataclass(frozen=True)
class ScorePanel:
    """Score matrix M, competition-rank matrix R, and average ranks A."""

    configs: tuple[str, ...]
    criteria: tuple[str, ...]
    M: np.ndarray
    R: np.ndarray
    A: np.ndarray


def competition_ranks(column: list[ValidatorScore | float]) -> np.ndarray:
    """Rank 1 = best (higher better); ties share the minimum rank.

    Undefined entries get the worst possible rank (h).
    """
    h = len(column)
    values = []
    for entry in column:
        if isinstance(entry, ValidatorScore):
            values.append(math.nan if entry.undefined else entry.value)
        else:
            values.append(float(entry))
    ranks = np.empty(h, dtype=np.int64)
    for i, v in enumerate(values):
        if math.isnan(v):
            ranks[i] = h
        else:
            better = sum(
                1 for w in values if not math.isnan(w) and w > v
            )
            ranks[i] = better + 1
    return ranks


def build_panel(all_scores: list[list[ValidatorScore]],
                configs: list[str] | None = None) -> ScorePanel:
    """Aggregate per-config criterion scores into ranks and average ranks."""
    h = len(all_scores)
    if h == 0:
        raise ShapeError("panel requires at least one configuration")
    n_crit = len(all_scores[0])
    if any(len(row) != n_crit for row in all_scores):
        raise ShapeError("ragged score table")
    criteria = tuple(s.criterion for s in all_scores[0])
    if configs is None:
        configs = [str(i) for i in range(h)]

    M = np.array([[math.nan if s.undefined else s.value for s in row]
                  for row in all_scores], dtype=np.float64)
    R = np.column_stack([
        competition_ranks([row[j] for row in all_scores])
        for j in range(n_crit)
    ]) if n_crit else np.zeros((h, 0), dtype=np.int64)
    A = R.mean(axis=1) if n_crit else np.ones(h)
    return ScorePanel(configs=tuple(configs), criteria=criteria, M=M, R=R, A=A)


def select_config(panel: ScorePanel) -> int:
    """Index of the lowest average rank; ties go to the lowest index."""
    return int(np.argmin(panel.A))


def write_panel_csv(panel: ScorePanel, scores_path, summary_path) -> None:
    """`config,criterion,score,rank` rows plus a per-config summary."""
    with open(scores_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "criterion", "score", "rank"])
        for i, cfg in enumerate(panel.configs):
            for j, crit in enumerate(panel.criteria):
                w.writerow([cfg, crit, repr(float(panel.M[i, j])),
                            int(panel.R[i, j])])
    chosen = select_config(panel)
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "average_rank", "selected"])
        for i, cfg in enumerate(panel.configs):
            w.writerow([cfg, repr(float(panel.A[i])),
                        "true" if i == chosen else "false"])


def read_scores_csv(path) -> ScorePanel:
    """Rebuild a panel from `config,criterion,score[,rank]` rows."""
    rows: dict[str, dict[str, float]] = {}
    order: list[str] = []
    criteria_order: list[str] = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            cfg = rec["config"]
            crit = rec["criterion"]
            if cfg not in rows:
                rows[cfg] = {}
                order.append(cfg)
            if crit not in criteria_order:
                criteria_order.append(crit)
            rows[cfg][crit] = float(rec["score"])
    scores = [
        [ValidatorScore(c, rows[cfg].get(c, math.nan),
                        undefined=math.isnan(rows[cfg].get(c, math.nan)))
         for c in criteria_order]
        for cfg in order
    ]
    return build_panel(scores, configs=order)


def write_scores_csv(scores: list[ValidatorScore], path_or_handle) -> None:
    """Seven-row `criterion,score` CSV for a single model."""
    if hasattr(path_or_handle, "write"):
        w = csv.writer(path_or_handle)
        w.writerow(["criterion", "score"])
        for s in scores:
            w.writerow([s.criterion, repr(float(s.value))])
    else:
        with open(path_or_handle, "w", newline="") as fh:
            write_scores_csv(scores, fh)
