"""Pseudo-label generation, ensembling strategies, and diagnostics.

Each trained head pseudo-labels the unlabeled split; multiple heads' labels
are combined by one of three strategies. ``mean_labels`` averages one-hot
votes, which makes it immune to the heads' differing confidence scales;
``mean_logits`` and ``mean_probs`` average raw outputs and inherit whatever
calibration each source happens to have.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import emb_io
from .data import EmbeddingSet, diagnostic_access
from .errors import MisalignedSourcesError, ShapeError
from .heads import ModelOutputs, softmax

MEAN_LABELS = "mean_labels"
MEAN_LOGITS = "mean_logits"
MEAN_PROBS = "mean_probs"
STRATEGIES = (MEAN_LABELS, MEAN_LOGITS, MEAN_PROBS)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Minimum max-softmax confidence for accepting a pseudo-label."""

    tau: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.tau <= 1.0):
            raise ShapeError("tau must be in [0, 1]")


@dataclass(frozen=True)
class PseudoLabelSet:
    """Soft label distributions for a set of sample ids."""

    ids: np.ndarray
    soft: np.ndarray
    source_count: int
    strategy: str

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.uint64)
        soft = np.asarray(self.soft, dtype=np.float64)
        if soft.ndim != 2 or soft.shape[0] != ids.shape[0]:
            raise ShapeError("soft matrix must be ids x classes")
        if soft.size and (np.any(soft < 0)
                          or np.max(np.abs(soft.sum(axis=1) - 1.0)) > 1e-6):
            raise ShapeError("soft rows must be non-negative and sum to 1")
        if self.strategy not in STRATEGIES:
            raise ShapeError(f"unknown strategy {self.strategy!r}")
        ids = ids.copy() if not ids.flags.owndata else ids
        soft = soft.copy() if not soft.flags.owndata else soft
        ids.setflags(write=False)
        soft.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "soft", soft)

    @property
    def class_count(self) -> int:
        return self.soft.shape[1]

    def hard_labels(self) -> np.ndarray:
        """Argmax of each soft row, ties to the lowest class index."""
        if self.soft.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argmax(self.soft, axis=1).astype(np.int64)


def pseudo_label(outputs: ModelOutputs, policy: ThresholdPolicy = ThresholdPolicy()
                 ) -> tuple[np.ndarray, np.ndarray]:
    """One-hot pseudo-labels for samples whose confidence clears tau.

    Returns (accepted ids, one-hot matrix). With tau = 0 every sample is
    accepted.
    """
    probs = softmax(outputs.logits)
    n, C = probs.shape
    keep = probs.max(axis=1) >= policy.tau if n else np.zeros(0, dtype=bool)
    preds = outputs.predictions[keep]
    onehot = np.zeros((int(keep.sum()), C), dtype=np.float64)
    if len(preds):
        onehot[np.arange(len(preds)), preds] = 1.0
    ids = outputs.ids[keep] if outputs.ids is not None else np.flatnonzero(keep)
    return np.asarray(ids, dtype=np.uint64), onehot


def _check_aligned(sources: list[tuple[np.ndarray, np.ndarray]]):
    if not sources:
        raise MisalignedSourcesError("at least one source required")
    ref_ids, ref_mat = sources[0]
    for ids, mat in sources[1:]:
        if mat.shape != ref_mat.shape or not np.array_equal(ids, ref_ids):
            raise MisalignedSourcesError(
                "misaligned sources: ids/shape must match across sources"
            )


def ensemble_mean_labels(sources: list[tuple[np.ndarray, np.ndarray]]
                         ) -> PseudoLabelSet:
    """Element-wise mean of one-hot vote matrices."""
    _check_aligned(sources)
    ids = sources[0][0]
    mean = np.mean([mat for _, mat in sources], axis=0)
    return PseudoLabelSet(ids=ids, soft=mean, source_count=len(sources),
                          strategy=MEAN_LABELS)


def ensemble_mean_logits(sources: list[tuple[np.ndarray, np.ndarray]]
                         ) -> PseudoLabelSet:
    """Softmax of the element-wise mean of logit matrices."""
    _check_aligned(sources)
    ids = sources[0][0]
    mean_logits = np.mean([mat for _, mat in sources], axis=0)
    return PseudoLabelSet(ids=ids, soft=softmax(mean_logits),
                          source_count=len(sources), strategy=MEAN_LOGITS)


def ensemble_mean_probs(sources: list[tuple[np.ndarray, np.ndarray]]
                        ) -> PseudoLabelSet:
    """Element-wise mean of per-source softmax probabilities."""
    _check_aligned(sources)
    ids = sources[0][0]
    mean = np.mean([softmax(mat) for _, mat in sources], axis=0)
    return PseudoLabelSet(ids=ids, soft=mean, source_count=len(sources),
                          strategy=MEAN_PROBS)


def ensemble(strategy: str, sources: list[tuple[np.ndarray, np.ndarray]]
             ) -> PseudoLabelSet:
    """Dispatch on strategy name; mean_labels expects one-hot sources,
    the other two expect raw logits."""
    if strategy == MEAN_LABELS:
        return ensemble_mean_labels(sources)
    if strategy == MEAN_LOGITS:
        return ensemble_mean_logits(sources)
    if strategy == MEAN_PROBS:
        return ensemble_mean_probs(sources)
    raise ShapeError(f"unknown strategy {strategy!r}")


def entropy_profile(probabilities: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-row natural-log Shannon entropy (0 log 0 = 0) and its mean."""
    P = np.asarray(probabilities, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    per_row = -terms.sum(axis=1)
    mean = float(per_row.mean()) if len(per_row) else 0.0
    return per_row, mean


def pseudo_label_accuracy(pseudo: PseudoLabelSet, unlabeled: EmbeddingSet) -> float:
    """Fraction of pseudo-labels matching the withheld truth.

    Diagnostic only: reads the unlabeled split's hidden labels through the
    guarded channel and never feeds anything back into training.
    """
    with diagnostic_access():
        truth = unlabeled.hidden_labels
    if truth is None:
        return math.nan
    id_to_row = {int(i): r for r, i in enumerate(unlabeled.ids)}
    try:
        rows = np.array([id_to_row[int(i)] for i in pseudo.ids], dtype=np.int64)
    except KeyError as exc:
        raise ShapeError(f"pseudo-label id {exc} not in unlabeled split") from exc
    if len(rows) == 0:
        return math.nan
    return float(np.mean(pseudo.hard_labels() == truth[rows]))


def top_confidence_ids(outputs: ModelOutputs, fraction: float = 0.2) -> np.ndarray:
    """Ids of the top-``fraction`` most confident predictions (max softmax).

    Diagnostic for comparing which samples different heads are sure about.
    """
    if not (0.0 < fraction <= 1.0):
        raise ShapeError("fraction must be in (0, 1]")
    conf = softmax(outputs.logits).max(axis=1)
    count = max(1, int(np.floor(fraction * len(conf)))) if len(conf) else 0
    order = np.argsort(-conf, kind="stable")[:count]
    return np.asarray(outputs.ids, dtype=np.uint64)[order]


def write_pseudo_label_file(pseudo: PseudoLabelSet, path) -> None:
    """EMB1 container with the soft-label block; strategy in the manifest."""
    n = pseudo.soft.shape[0]
    emb_io.write_raw(path, features=np.zeros((n, 0), dtype=np.float32),
                     class_count=pseudo.class_count, ids=pseudo.ids,
                     soft=pseudo.soft)
    emb_io.write_manifest(path, strategy=pseudo.strategy,
                          source_count=pseudo.source_count)


def read_pseudo_label_file(path) -> PseudoLabelSet:
    rec = emb_io.read_raw(path)
    if rec.soft is None:
        raise ShapeError("file has no soft-label block")
    manifest = emb_io.read_manifest(path) or {}
    ids = rec.ids if rec.ids is not None else np.arange(rec.n, dtype=np.uint64)
    return PseudoLabelSet(
        ids=ids,
        soft=_renormalize_f32(rec.soft),
        source_count=int(manifest.get("source_count", 1)),
        strategy=manifest.get("strategy", MEAN_LABELS),
    )


def _renormalize_f32(soft: np.ndarray) -> np.ndarray:
    """Repair the tiny row-sum drift introduced by f32 storage."""
    sums = soft.sum(axis=1, keepdims=True)
    safe = np.where(sums > 0, sums, 1.0)
    return soft / safe
