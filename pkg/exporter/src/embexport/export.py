"""Export job: images -> EMB1 file + manifest."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .dataset import load_index
from .emb_format import write_embeddings, write_manifest
from .encoders import build_encoder


@dataclass(frozen=True)
class ExportJob:
    model_name: str
    input_path: str
    output_path: str
    batch_size: int = 64
    device: str = "cpu"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def export(job: ExportJob) -> Path:
    """Run the job; returns the output path.

    One feature row per decodable image, in sorted-path order. Undecodable
    images are skipped with a warning and listed in the manifest. The output
    file is written once, atomically, after all rows are computed.
    """
    index = load_index(job.input_path)
    encoder = build_encoder(job.model_name, device=job.device)

    rows: list[np.ndarray] = []
    labels: list[int] = []
    skipped: list[str] = []
    batch_imgs: list[Image.Image] = []
    batch_labels: list[int] = []

    def flush():
        if batch_imgs:
            rows.append(encoder.encode_batch(batch_imgs))
            labels.extend(batch_labels)
            for img in batch_imgs:
                img.close()
            batch_imgs.clear()
            batch_labels.clear()

    for path, label in zip(index.paths, index.labels):
        try:
            img = Image.open(path)
            img.load()
        except (UnidentifiedImageError, OSError):
            warnings.warn(f"skipping undecodable image {path}")
            skipped.append(str(path))
            continue
        batch_imgs.append(img)
        batch_labels.append(label)
        if len(batch_imgs) >= job.batch_size:
            flush()
    flush()

    if not rows:
        raise ValueError("no decodable images to export")
    features = np.vstack(rows)
    out = Path(job.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_embeddings(out, features,
                     labels=np.asarray(labels, dtype=np.int64),
                     ids=np.arange(len(labels), dtype=np.uint64),
                     class_count=len(index.class_names))
    write_manifest(out,
                   dataset_name=Path(job.input_path).name,
                   class_names=list(index.class_names),
                   source_model=encoder.name,
                   preprocessing=encoder.preprocessing,
                   skipped=skipped)
    return out
