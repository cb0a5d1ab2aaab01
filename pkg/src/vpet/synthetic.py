"""Synthetic diverse-views benchmark fixture.

One latent Gaussian mixture is observed through several random linear
projections, each with its own additive noise. The views end up roughly
equally informative but disagree on individual hard samples, which is the
regime where averaging their pseudo-labels genuinely helps.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import EmbeddingSet
from .emb_io import write_embedding_file, write_manifest


@dataclass(frozen=True)
class DiverseViewsSpec:
    classes: int = 8
    latent_dim: int = 16
    view_dim: int = 64
    n_views: int = 4
    samples_per_class: int = 628
    noise_sigma: float = 0.5
    class_separation: float = 0.9
    seed: int = 0


def generate_diverse_views(spec: DiverseViewsSpec) -> list[EmbeddingSet]:
    """One EmbeddingSet per view, all sharing ids and labels."""
    rng = np.random.default_rng(spec.seed)
    C, L = spec.classes, spec.latent_dim
    n = C * spec.samples_per_class

    means = rng.normal(0.0, spec.class_separation, size=(C, L))
    labels = np.repeat(np.arange(C), spec.samples_per_class)
    labels = labels[rng.permutation(n)]
    latent = means[labels] + rng.normal(0.0, 1.0, size=(n, L))
    ids = np.arange(n, dtype=np.uint64)

    views = []
    for v in range(spec.n_views):
        vrng = np.random.default_rng(
            np.random.SeedSequence([spec.seed, 97, v]).generate_state(1)[0]
        )
        projection = vrng.normal(0.0, 1.0, size=(L, spec.view_dim)) / np.sqrt(L)
        feats = latent @ projection
        feats = feats + vrng.normal(0.0, spec.noise_sigma, size=feats.shape)
        views.append(EmbeddingSet(features=feats, class_count=C,
                                  labels=labels, ids=ids))
    return views


def write_diverse_views(spec: DiverseViewsSpec, out_dir) -> list[Path]:
    """Write one EMB1 file per view; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for v, view in enumerate(generate_diverse_views(spec)):
        path = out / f"view{v}.emb"
        write_embedding_file(view, path)
        write_manifest(path, dataset_name="diverse-views",
                       class_names=[f"class{c}" for c in range(spec.classes)],
                       source_model=f"synthetic-view-{v}")
        paths.append(path)
    return paths
