"""Standalone EMB1 writer.

Implements the documented container independently of any consumer, so an
exported file is a contract test of the format itself. Little-endian:
magic "EMB1", version u32=1, n u32, d u32, class_count u32, flags u32
(bit0 labels i32, bit1 ids u64), then the payload blocks in that order.
Features are stored as f32 row-major.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
VERSION = 1
FLAG_LABELS = 1 << 0
FLAG_IDS = 1 << 1

_HEADER = struct.Struct("<4sIIIII")


def write_embeddings(path, features: np.ndarray, labels=None, ids=None,
                     class_count: int = 0) -> None:
    """Atomic write: the target file appears complete or not at all."""
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 2:
        raise ValueError("features must be 2-D")
    n, d = features.shape
    flags = 0
    chunks = []
    if labels is not None:
        labels = np.ascontiguousarray(labels, dtype="<i4")
        if labels.shape != (n,):
            raise ValueError("labels length must match rows")
        flags |= FLAG_LABELS
    if ids is not None:
        ids = np.ascontiguousarray(ids, dtype="<u8")
        if ids.shape != (n,):
            raise ValueError("ids length must match rows")
        flags |= FLAG_IDS

    chunks.append(_HEADER.pack(MAGIC, VERSION, n, d, class_count, flags))
    chunks.append(features.tobytes())
    if labels is not None:
        chunks.append(labels.tobytes())
    if ids is not None:
        chunks.append(ids.tobytes())

    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, target)


def write_manifest(path, **fields) -> Path:
    target = Path(path)
    out = target.with_name(target.stem + ".manifest.json")
    out.write_text(json.dumps(fields, indent=2, sort_keys=True) + "\n")
    return out
