"""Dataset containers and deterministic N-shot split generation.

An :class:`EmbeddingSet` is the unit every other module consumes: a dense
``n x d`` float matrix with optional integer labels and stable sample ids.
:func:`make_split` carves a labeled/unlabeled/validation/test partition out
of one source set, reproducibly from a seed.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyDatasetError,
    HiddenLabelError,
    InsufficientShotsError,
    ShapeError,
)

# Depth counter for the diagnostic-only channel to withheld labels.
_diagnostic_depth = 0


@contextlib.contextmanager
def diagnostic_access():
    """Context in which withheld true labels may be read.

    Only diagnostic code (pseudo-label accuracy reporting) should enter this;
    training paths never do, which keeps the unlabeled split's true labels
    out of every learning computation.
    """
    global _diagnostic_depth
    _diagnostic_depth += 1
    try:
        yield
    finally:
        _diagnostic_depth -= 1


@dataclass(frozen=True)
class EmbeddingSet:
    """Immutable ``n x d`` feature matrix with optional labels and ids.

    ``class_count`` is 0 when unknown (only legal if ``labels`` is None).
    ``hidden_labels`` carries withheld ground truth for diagnostic use and is
    never serialized as ordinary labels; reading it outside
    :func:`diagnostic_access` raises.
    """

    features: np.ndarray
    class_count: int = 0
    labels: np.ndarray | None = None
    ids: np.ndarray | None = None
    _hidden_labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {feats.shape}")
        n, d = feats.shape
        if n > 0 and d < 1:
            raise ShapeError("features must have at least one column")
        if not np.all(np.isfinite(feats)):
            raise ShapeError("features contain non-finite values")
        object.__setattr__(self, "features", feats)

        if self.ids is None:
            object.__setattr__(self, "ids", np.arange(n, dtype=np.uint64))
        else:
            ids = np.asarray(self.ids, dtype=np.uint64)
            if ids.shape != (n,):
                raise ShapeError("ids length must match row count")
            if len(np.unique(ids)) != n:
                raise ShapeError("ids must be unique")
            object.__setattr__(self, "ids", ids)

        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ShapeError("labels length must match row count")
            if self.class_count < 1:
                raise ShapeError("class_count must be positive when labels present")
            if n > 0 and (labels.min() < 0 or labels.max() >= self.class_count):
                raise ShapeError(
                    f"labels must lie in [0, {self.class_count})"
                )
            object.__setattr__(self, "labels", labels)
        if self._hidden_labels is not None:
            hidden = np.asarray(self._hidden_labels, dtype=np.int64)
            if hidden.shape != (n,):
                raise ShapeError("hidden labels length must match row count")
            object.__setattr__(self, "_hidden_labels", hidden)

        for block in (feats, self.ids, self.labels, self._hidden_labels):
            if block is not None:
                block.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def hidden_labels(self) -> np.ndarray | None:
        if _diagnostic_depth == 0:
            raise HiddenLabelError(
                "withheld labels are diagnostic-only; wrap access in "
                "diagnostic_access()"
            )
        return self._hidden_labels

    def take(self, indices: np.ndarray, *, withhold_labels: bool = False,
             keep_hidden: bool = False) -> "EmbeddingSet":
        """Row subset. ``withhold_labels`` moves labels to the hidden channel."""
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        hidden = None
        if withhold_labels:
            hidden = labels if keep_hidden else None
            labels = None
        return EmbeddingSet(
            features=self.features[indices],
            class_count=self.class_count,
            labels=labels,
            ids=self.ids[indices],
            _hidden_labels=hidden,
        )


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a labeled source into few-shot SSL splits.

    ``test_fraction`` defaults to 0 so a source that already excludes test
    data splits into labeled/validation/unlabeled only.
    """

    shots_per_class: int
    seed: int
    validation_fraction: float = 0.0
    test_fraction: float = 0.0

    def __post_init__(self):
        if self.shots_per_class < 1:
            raise ShapeError("shots_per_class must be >= 1")
        if not (0.0 <= self.validation_fraction < 1.0):
            raise ShapeError("validation_fraction must be in [0, 1)")
        if not (0.0 <= self.test_fraction < 1.0):
            raise ShapeError("test_fraction must be in [0, 1)")
        if self.validation_fraction + self.test_fraction >= 1.0:
            raise ShapeError("validation_fraction + test_fraction must be < 1")
        if self.seed < 0:
            raise ShapeError("seed must be a non-negative 64-bit integer")


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint labeled / unlabeled / validation / test partition."""

    labeled: EmbeddingSet
    unlabeled: EmbeddingSet
    validation: EmbeddingSet
    test: EmbeddingSet


def _fisher_yates(indices: np.ndarray, seed: int) -> np.ndarray:
    """In-to-out Fisher-Yates shuffle driven by a PCG64 stream."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = indices.copy()
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]
    return out


def _stratified_counts(
    pool_sizes: dict[int, int], fraction: float, capacity: dict[int, int]
) -> dict[int, int]:
    """Per-class draw counts for floor(fraction * total), stratified.

    Per-class counts are floored from ``fraction * class_size`` (capped at
    the class's remaining capacity); leftover slots needed to reach the
    global floored target are assigned one per class, lowest class indices
    first, skipping classes already at capacity.
    """
    total = sum(pool_sizes.values())
    target = int(np.floor(fraction * total))
    classes = sorted(pool_sizes)
    counts = {
        c: min(int(np.floor(fraction * pool_sizes[c])), capacity[c])
        for c in classes
    }
    leftover = target - sum(counts.values())
    while leftover > 0:
        assigned = False
        for c in classes:
            if leftover <= 0:
                break
            if counts[c] < capacity[c]:
                counts[c] += 1
                leftover -= 1
                assigned = True
        if not assigned:
            break
    return counts


def make_split(source: EmbeddingSet, spec: SplitSpec) -> DatasetSplit:
    """Deterministically partition ``source`` into the four SSL splits.

    Per class, a Fisher-Yates shuffle seeded with ``spec.seed XOR class``
    orders the members; the first N go to ``labeled``. Of the remainder,
    ``validation_fraction`` (floored, stratified) is withheld as validation,
    then ``test_fraction`` likewise as test; the rest is the unlabeled split,
    whose true labels are retained only on the diagnostic channel.
    """
    if source.n == 0:
        raise EmptyDatasetError("empty dataset")
    if source.labels is None:
        raise ShapeError("make_split requires a labeled source")

    n_shot = spec.shots_per_class
    class_order: dict[int, np.ndarray] = {}
    for c in range(source.class_count):
        members = np.flatnonzero(source.labels == c)
        if len(members) < n_shot:
            raise InsufficientShotsError(c, len(members), n_shot)
        class_order[c] = _fisher_yates(members, spec.seed ^ c)

    labeled_idx: list[int] = []
    pools: dict[int, list[int]] = {}
    for c in sorted(class_order):
        order = class_order[c]
        labeled_idx.extend(order[:n_shot].tolist())
        pools[c] = order[n_shot:].tolist()

    # Both fractions are measured against the post-labeled remainder.
    pool_sizes = {c: len(p) for c, p in pools.items()}
    val_counts = _stratified_counts(pool_sizes, spec.validation_fraction, pool_sizes)
    room = {c: pool_sizes[c] - val_counts[c] for c in pool_sizes}
    test_counts = _stratified_counts(pool_sizes, spec.test_fraction, room)

    val_idx: list[int] = []
    test_idx: list[int] = []
    unl_idx: list[int] = []
    for c in sorted(pools):
        pool = pools[c]
        nv, nt = val_counts[c], test_counts[c]
        val_idx.extend(pool[:nv])
        test_idx.extend(pool[nv:nv + nt])
        unl_idx.extend(pool[nv + nt:])

    return DatasetSplit(
        labeled=source.take(np.array(labeled_idx, dtype=np.int64)),
        unlabeled=source.take(
            np.array(unl_idx, dtype=np.int64), withhold_labels=True, keep_hidden=True
        ),
        validation=source.take(
            np.array(val_idx, dtype=np.int64), withhold_labels=True
        ),
        test=source.take(np.array(test_idx, dtype=np.int64)),
    )
