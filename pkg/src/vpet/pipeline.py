"""End-to-end orchestration: the four-phase run, sweeps, and reports.

A run takes one or more embedding sources (the same samples seen through
different feature extractors) and one or more head variants, then:

  (a) trains every (variant, source) pair's head on the labeled split,
  (b) pseudo-labels the unlabeled split with each pair,
  (c) ensembles the pseudo-labels with the configured strategy,
  (d) reinitializes one chosen pair's head from its seed and trains it on
      the soft pseudo-labels (plus the labeled set unless disabled),

and reports top-1 test accuracy with diagnostics. Each pair derives its
training seed from (run seed, variant index, source index), so results do
not depend on execution order.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import emb_io
from .data import DatasetSplit, EmbeddingSet, SplitSpec, make_split
from .ensemble import (
    MEAN_LABELS,
    STRATEGIES,
    PseudoLabelSet,
    ThresholdPolicy,
    ensemble,
    entropy_profile,
    pseudo_label,
    pseudo_label_accuracy,
    write_pseudo_label_file,
)
from .errors import DataError, MisalignedSourcesError, ShapeError, VpetError
from .heads import (
    HeadConfig,
    HeadModel,
    ModelOutputs,
    TrainTargets,
    forward,
    save_head,
    softmax,
    train_head,
)
from .validators import (
    ScorePanel,
    build_panel,
    score_model,
    select_config,
    write_panel_csv,
)

CONFIG_SCHEMA = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """One full run: sources x head variants, split, and ensembling policy."""

    sources: tuple[tuple[str, str], ...]
    head_variants: tuple[HeadConfig, ...]
    split: SplitSpec
    strategy: str = MEAN_LABELS
    tau: float = 0.0
    final_trainee: tuple[int, int] | None = None
    mix_labeled: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.sources:
            raise ShapeError("at least one embedding source required")
        if not self.head_variants:
            raise ShapeError("at least one head variant required")
        if self.strategy not in STRATEGIES:
            raise ShapeError(f"unknown strategy {self.strategy!r}")
        if self.final_trainee is not None:
            n, m = self.final_trainee
            if not (0 <= n < len(self.head_variants)):
                raise ShapeError("final_trainee variant index out of range")
            if not (0 <= m < len(self.sources)):
                raise ShapeError("final_trainee source index out of range")

    def to_dict(self) -> dict:
        return {
            "schema": CONFIG_SCHEMA,
            "seed": self.seed,
            "sources": [{"name": n, "path": p} for n, p in self.sources],
            "heads": [h.to_dict() for h in self.head_variants],
            "split": {
                "shots_per_class": self.split.shots_per_class,
                "seed": self.split.seed,
                "validation_fraction": self.split.validation_fraction,
                "test_fraction": self.split.test_fraction,
            },
            "strategy": self.strategy,
            "tau": self.tau,
            "final_trainee": list(self.final_trainee)
            if self.final_trainee is not None else None,
            "mix_labeled": self.mix_labeled,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if doc.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
            raise DataError(f"unsupported config schema {doc.get('schema')!r}")
        split = doc["split"]
        trainee = doc.get("final_trainee")
        return cls(
            sources=tuple((s["name"], s["path"]) for s in doc["sources"]),
            head_variants=tuple(HeadConfig.from_dict(h) for h in doc["heads"]),
            split=SplitSpec(
                shots_per_class=split["shots_per_class"],
                seed=split.get("seed", doc.get("seed", 0)),
                validation_fraction=split.get("validation_fraction", 0.0),
                test_fraction=split.get("test_fraction", 0.0),
            ),
            strategy=doc.get("strategy", MEAN_LABELS),
            tau=doc.get("tau", 0.0),
            final_trainee=tuple(trainee) if trainee is not None else None,
            mix_labeled=doc.get("mix_labeled", True),
            seed=doc.get("seed", 0),
        )

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from integer parts (order-sensitive)."""
    return int(np.random.SeedSequence([int(p) & (2**63 - 1) for p in parts])
               .generate_state(1, dtype=np.uint64)[0])


def pair_name(n: int, m: int) -> str:
    return f"m{m}n{n}"


@dataclass
class PreparedRun:
    """Phases (a)+(b) done: splits, trained pair heads, and their outputs."""

    config: ExperimentConfig
    splits: list[DatasetSplit]
    heads: dict[tuple[int, int], HeadModel]
    head_configs: dict[tuple[int, int], HeadConfig]
    unlabeled_outputs: dict[tuple[int, int], ModelOutputs]
    accepted: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]
    timings: dict[str, float]


@dataclass
class VpetResult:
    final_model: HeadModel
    final_top1: float
    trainee: tuple[int, int]
    per_source_top1: dict[str, float]
    mean_entropy_per_source: dict[str, float]
    pseudo_label_accuracy: float
    pseudo: PseudoLabelSet
    panel: ScorePanel | None
    timings: dict[str, float]

    def to_json_dict(self) -> dict:
        def clean(x):
            return None if (isinstance(x, float) and not np.isfinite(x)) else x

        return {
            "schema": 1,
            "final_top1": clean(self.final_top1),
            "trainee": list(self.trainee),
            "per_source_top1": {k: clean(v)
                                for k, v in sorted(self.per_source_top1.items())},
            "mean_entropy_per_source": {
                k: clean(v)
                for k, v in sorted(self.mean_entropy_per_source.items())},
            "pseudo_label_accuracy": clean(self.pseudo_label_accuracy),
            "timings": {k: self.timings[k] for k in sorted(self.timings)},
        }


def load_sources(config: ExperimentConfig) -> list[EmbeddingSet]:
    """Decode all sources and require identical ids and labels across them."""
    sets = []
    for name, path in config.sources:
        try:
            sets.append(emb_io.read_embedding_file(path))
        except DataError as exc:
            raise type(exc)(f"source {name!r}: {exc}") from exc
    ref = sets[0]
    for (name, _), s in zip(config.sources[1:], sets[1:]):
        if not np.array_equal(s.ids, ref.ids):
            raise MisalignedSourcesError(
                f"source {name!r}: sample ids differ from first source"
            )
        if (s.labels is None) != (ref.labels is None) or (
            s.labels is not None and not np.array_equal(s.labels, ref.labels)
        ):
            raise MisalignedSourcesError(
                f"source {name!r}: labels differ from first source"
            )
    return sets


def prepare_run(config: ExperimentConfig) -> PreparedRun:
    """Execute phases (a) supervised training and (b) pseudo-labeling."""
    sets = load_sources(config)
    splits = [make_split(s, config.split) for s in sets]
    policy = ThresholdPolicy(config.tau)

    heads: dict[tuple[int, int], HeadModel] = {}
    head_configs: dict[tuple[int, int], HeadConfig] = {}
    unlabeled_outputs: dict[tuple[int, int], ModelOutputs] = {}
    accepted: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    t0 = time.perf_counter()
    for n, variant in enumerate(config.head_variants):
        for m, split in enumerate(splits):
            cfg = dataclasses.replace(
                variant, seed=derive_seed(config.seed, n, m, variant.seed)
            )
            head_configs[(n, m)] = cfg
            try:
                heads[(n, m)] = train_head(
                    split.labeled, TrainTargets(hard=split.labeled.labels), cfg
                )
            except VpetError as exc:
                raise DataError(f"pair {pair_name(n, m)}: {exc}") from exc
    t1 = time.perf_counter()
    for (n, m), model in heads.items():
        try:
            outputs = forward(model, splits[m].unlabeled)
            unlabeled_outputs[(n, m)] = outputs
            accepted[(n, m)] = pseudo_label(outputs, policy)
        except VpetError as exc:
            raise DataError(f"pair {pair_name(n, m)}: {exc}") from exc
    t2 = time.perf_counter()

    return PreparedRun(
        config=config, splits=splits, heads=heads, head_configs=head_configs,
        unlabeled_outputs=unlabeled_outputs, accepted=accepted,
        timings={"phase_a": t1 - t0, "phase_b": t2 - t1},
    )


def _common_ids(accepted: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Ids accepted by every source, in the first source's order."""
    common = set(int(i) for i in accepted[0][0])
    for ids, _ in accepted[1:]:
        common &= set(int(i) for i in ids)
    return np.array([int(i) for i in accepted[0][0] if int(i) in common],
                    dtype=np.uint64)


def build_ensemble(prepared: PreparedRun,
                   pairs: list[tuple[int, int]] | None = None) -> PseudoLabelSet:
    """Phase (c): combine the chosen pairs' pseudo-labels.

    With tau > 0 the accepted sets can differ per pair; only ids accepted by
    every pair are ensembled.
    """
    config = prepared.config
    if pairs is None:
        pairs = sorted(prepared.heads.keys())
    acc = [prepared.accepted[p] for p in pairs]
    ids = _common_ids(acc)

    sources = []
    for (n, m), (pair_ids, onehot) in zip(pairs, acc):
        id_to_row = {int(i): r for r, i in enumerate(pair_ids)}
        rows = np.array([id_to_row[int(i)] for i in ids], dtype=np.int64)
        if config.strategy == MEAN_LABELS:
            mat = onehot[rows]
        else:
            outputs = prepared.unlabeled_outputs[(n, m)]
            out_rows = {int(i): r for r, i in enumerate(outputs.ids)}
            mat = outputs.logits[
                np.array([out_rows[int(i)] for i in ids], dtype=np.int64)
            ]
        sources.append((ids, mat))
    return ensemble(config.strategy, sources)


def resolve_trainee(prepared: PreparedRun) -> tuple[tuple[int, int],
                                                    ScorePanel | None]:
    """Explicit (n*, m*) from the config, or the pair whose validation-set
    criteria achieve the lowest average rank."""
    config = prepared.config
    if config.final_trainee is not None:
        return (tuple(config.final_trainee), None)
    if prepared.splits[0].validation.n == 0:
        raise DataError(
            "final_trainee not set and validation split is empty; "
            "set validation_fraction > 0 or pick the trainee explicitly"
        )
    pairs = sorted(prepared.heads.keys())
    all_scores = []
    for (n, m) in pairs:
        outputs = forward(prepared.heads[(n, m)], prepared.splits[m].validation)
        class_count = prepared.splits[m].labeled.class_count
        all_scores.append(score_model(
            outputs, class_count, seed=derive_seed(config.seed, 7, n, m)
        ))
    panel = build_panel(all_scores, configs=[pair_name(n, m) for n, m in pairs])
    return pairs[select_config(panel)], panel


def self_train(prepared: PreparedRun, pseudo: PseudoLabelSet,
               trainee: tuple[int, int]) -> HeadModel:
    """Phase (d): reinit the trainee head from its seed, fit soft targets."""
    config = prepared.config
    n, m = trainee
    split = prepared.splits[m]
    unl = split.unlabeled
    class_count = split.labeled.class_count

    id_to_row = {int(i): r for r, i in enumerate(unl.ids)}
    rows = np.array([id_to_row[int(i)] for i in pseudo.ids], dtype=np.int64)
    feats = unl.features[rows]
    soft = pseudo.soft

    if config.mix_labeled:
        lab = split.labeled
        onehot = np.zeros((lab.n, class_count), dtype=np.float64)
        onehot[np.arange(lab.n), lab.labels] = 1.0
        feats = np.vstack([feats, lab.features]) if len(feats) else lab.features
        soft = np.vstack([soft, onehot]) if len(soft) else onehot
    if len(feats) == 0:
        raise DataError("nothing to self-train on: no pseudo-labels, no labeled mix")

    train_set = EmbeddingSet(features=feats, class_count=class_count)
    return train_head(train_set, TrainTargets(soft=soft),
                      prepared.head_configs[(n, m)], class_count=class_count)


def top1_accuracy(model: HeadModel, test: EmbeddingSet) -> float:
    if test.n == 0 or test.labels is None:
        return float("nan")
    preds = forward(model, test).predictions
    return float(np.mean(preds == test.labels))


def run_vpet(config: ExperimentConfig, out_dir=None) -> VpetResult:
    """The full four-phase run; optionally writes the artifact directory."""
    prepared = prepare_run(config)
    timings = dict(prepared.timings)

    t0 = time.perf_counter()
    pseudo = build_ensemble(prepared)
    timings["phase_c"] = time.perf_counter() - t0

    trainee, panel = resolve_trainee(prepared)
    if trainee not in prepared.heads:
        raise DataError(f"final trainee {trainee} out of range")

    t0 = time.perf_counter()
    final_model = self_train(prepared, pseudo, trainee)
    timings["phase_d"] = time.perf_counter() - t0

    per_source_top1 = {}
    mean_entropy = {}
    for (n, m), model in sorted(prepared.heads.items()):
        name = pair_name(n, m)
        per_source_top1[name] = top1_accuracy(model, prepared.splits[m].test)
        _, ent = entropy_profile(softmax(prepared.unlabeled_outputs[(n, m)].logits))
        mean_entropy[name] = ent

    result = VpetResult(
        final_model=final_model,
        final_top1=top1_accuracy(final_model, prepared.splits[trainee[1]].test),
        trainee=tuple(trainee),
        per_source_top1=per_source_top1,
        mean_entropy_per_source=mean_entropy,
        pseudo_label_accuracy=pseudo_label_accuracy(
            pseudo, prepared.splits[0].unlabeled
        ),
        pseudo=pseudo,
        panel=panel,
        timings=timings,
    )
    if out_dir is not None:
        write_run_artifacts(prepared, result, out_dir)
    return result


def write_run_artifacts(prepared: PreparedRun, result: VpetResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for (n, m), model in sorted(prepared.heads.items()):
        pair_dir = out / pair_name(n, m)
        pair_dir.mkdir(exist_ok=True)
        save_head(model, pair_dir / "model.head")
        write_outputs_file(prepared.unlabeled_outputs[(n, m)],
                           pair_dir / "outputs.emb")
    write_pseudo_label_file(result.pseudo, out / "pseudo.emb")
    if result.panel is not None:
        write_panel_csv(result.panel, out / "panel.csv",
                        out / "panel_summary.csv")
    (out / "result.json").write_text(
        json.dumps(result.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )


def write_outputs_file(outputs: ModelOutputs, path) -> None:
    """Persist (features, logits) as one EMB1 matrix [phi | logits]."""
    combined = np.hstack([outputs.features, outputs.logits])
    emb_io.write_raw(path, combined, class_count=outputs.logits.shape[1],
                     ids=np.asarray(outputs.ids, dtype=np.uint64))
    emb_io.write_manifest(path, kind="model_outputs",
                          feature_dim=int(outputs.features.shape[1]),
                          class_count=int(outputs.logits.shape[1]))


def read_outputs_file(path) -> ModelOutputs:
    rec = emb_io.read_raw(path)
    manifest = emb_io.read_manifest(path)
    if manifest is None or manifest.get("kind") != "model_outputs":
        raise DataError(f"{path}: missing model_outputs manifest")
    d = int(manifest["feature_dim"])
    C = int(manifest["class_count"])
    if rec.d != d + C:
        raise DataError(f"{path}: matrix width {rec.d} != {d}+{C}")
    feats = rec.features[:, :d]
    logits = rec.features[:, d:]
    preds = (np.argmax(logits, axis=1).astype(np.int64)
             if rec.n else np.zeros(0, dtype=np.int64))
    ids = rec.ids if rec.ids is not None else np.arange(rec.n, dtype=np.uint64)
    return ModelOutputs(features=feats, logits=logits, predictions=preds, ids=ids)


# ---------------------------------------------------------------------------
# hyperparameter sweep
# ---------------------------------------------------------------------------

def run_hyperparameter_sweep(
    grid: list[HeadConfig],
    split: DatasetSplit | SplitSpec,
    source: EmbeddingSet | None = None,
    cluster_seed: int | None = None,
) -> tuple[ScorePanel, HeadConfig]:
    """Train one head per grid point on the labeled split, score all seven
    criteria on the unlabeled validation split, select by lowest average rank.
    """
    if not grid:
        raise ShapeError("empty hyperparameter grid")
    if isinstance(split, SplitSpec):
        if source is None:
            raise ShapeError("a source set is required with a SplitSpec")
        split = make_split(source, split)
    if split.validation.n == 0:
        raise DataError("hyperparameter sweep needs a non-empty validation split")
    if cluster_seed is None:
        cluster_seed = derive_seed(9, len(grid))

    class_count = split.labeled.class_count
    all_scores = []
    for cfg in grid:
        model = train_head(split.labeled, TrainTargets(hard=split.labeled.labels),
                           cfg)
        outputs = forward(model, split.validation)
        all_scores.append(score_model(outputs, class_count, seed=cluster_seed))
    panel = build_panel(all_scores,
                        configs=[f"cfg{i}" for i in range(len(grid))])
    return panel, grid[select_config(panel)]


# ---------------------------------------------------------------------------
# ensemble-size scaling sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingRow:
    size: int
    mean_accuracy: float
    accuracies: tuple[float, ...]


def _distinct_subsets(pool: int, size: int, count: int,
                      rng: np.random.Generator) -> list[tuple[int, ...]]:
    import math as _math

    limit = _math.comb(pool, size)
    target = min(count, limit)
    seen: set[tuple[int, ...]] = set()
    while len(seen) < target:
        pick = tuple(sorted(rng.choice(pool, size=size, replace=False).tolist()))
        seen.add(pick)
    return sorted(seen)


def run_scaling_sweep(config: ExperimentConfig, max_sources: int,
                      subsets_per_size: int = 5) -> list[ScalingRow]:
    """Mean final accuracy for every ensemble size 1..max_sources.

    Each size is averaged over up to ``subsets_per_size`` distinct random
    subsets of the available (variant, source) pairs.
    """
    prepared = prepare_run(config)
    pairs = sorted(prepared.heads.keys())
    if max_sources > len(pairs):
        raise DataError(
            f"insufficient sources: have {len(pairs)}, need {max_sources}"
        )
    trainee, _ = resolve_trainee(prepared)
    test = prepared.splits[trainee[1]].test

    rows = []
    for size in range(1, max_sources + 1):
        rng = np.random.default_rng(derive_seed(config.seed, 11, size))
        subsets = _distinct_subsets(len(pairs), size, subsets_per_size, rng)
        accs = []
        for subset in subsets:
            chosen = [pairs[i] for i in subset]
            pseudo = build_ensemble(prepared, pairs=chosen)
            model = self_train(prepared, pseudo, trainee)
            accs.append(top1_accuracy(model, test))
        rows.append(ScalingRow(size=size,
                               mean_accuracy=float(np.mean(accs)),
                               accuracies=tuple(accs)))
    return rows


def write_scaling_csv(rows: list[ScalingRow], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ensemble_size", "mean_test_accuracy"])
        for r in rows:
            w.writerow([r.size, repr(r.mean_accuracy)])
