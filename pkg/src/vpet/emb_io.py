"""EMB1 binary container and JSON manifests.

Layout, little-endian throughout::

    magic   "EMB1"           4 bytes
    version u32 = 1
    n       u32              row count
    d       u32              feature columns (0 for pure soft-label files)
    C       u32              class count, 0 when labels absent/unknown
    flags   u32              bit0 labels, bit1 ids, bit2 soft-label block
    features  n*d   f32, row-major
    labels    n     i32          (if bit0)
    ids       n     u64          (if bit1)
    soft      n*C   f32, row-major (if bit2)

Features are stored as f32; the companion ``<name>.manifest.json`` carries
dataset_name, class_names, source_model and free-form extras.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import EmbeddingSet
from .errors import (
    BadMagicError,
    LabelRangeError,
    NonFiniteValueError,
    ShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
)

MAGIC = b"EMB1"
VERSION = 1
FLAG_LABELS = 1 << 0
FLAG_IDS = 1 << 1
FLAG_SOFT = 1 << 2

_HEADER = struct.Struct("<4sIIIII")


@dataclass
class RawRecord:
    """Decoded EMB1 payload before any semantic validation."""

    n: int
    d: int
    class_count: int
    features: np.ndarray
    labels: np.ndarray | None
    ids: np.ndarray | None
    soft: np.ndarray | None


def _read_block(buf: bytes, offset: int, count: int, dtype) -> tuple[np.ndarray, int]:
    nbytes = count * np.dtype(dtype).itemsize
    if offset + nbytes > len(buf):
        raise TruncatedFileError(
            f"truncated payload: need {offset + nbytes} bytes, have {len(buf)}"
        )
    arr = np.frombuffer(buf, dtype=np.dtype(dtype).newbyteorder("<"),
                        count=count, offset=offset)
    return arr, offset + nbytes


def read_raw(path) -> RawRecord:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise TruncatedFileError("truncated header")
    magic, version, n, d, class_count, flags = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")

    offset = _HEADER.size
    features, offset = _read_block(buf, offset, n * d, np.float32)
    features = features.reshape(n, d).astype(np.float64)

    labels = ids = soft = None
    if flags & FLAG_LABELS:
        labels, offset = _read_block(buf, offset, n, np.int32)
        labels = labels.astype(np.int64)
    if flags & FLAG_IDS:
        ids, offset = _read_block(buf, offset, n, np.uint64)
        ids = ids.copy()
    if flags & FLAG_SOFT:
        soft, offset = _read_block(buf, offset, n * class_count, np.float32)
        soft = soft.reshape(n, class_count).astype(np.float64)
    if offset != len(buf):
        raise TruncatedFileError(
            f"trailing bytes: expected {offset}, file has {len(buf)}"
        )

    if not np.all(np.isfinite(features)):
        raise NonFiniteValueError("non-finite feature values")
    if soft is not None and not np.all(np.isfinite(soft)):
        raise NonFiniteValueError("non-finite soft-label values")
    if labels is not None:
        if class_count < 1:
            raise LabelRangeError("labels present but class_count is 0")
        if n > 0 and (labels.min() < 0 or labels.max() >= class_count):
            raise LabelRangeError(
                f"label out of range: expected [0, {class_count})"
            )
    return RawRecord(n=n, d=d, class_count=class_count, features=features,
                     labels=labels, ids=ids, soft=soft)


def write_raw(path, features: np.ndarray, class_count: int = 0,
              labels: np.ndarray | None = None, ids: np.ndarray | None = None,
              soft: np.ndarray | None = None) -> None:
    features = np.ascontiguousarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ShapeError("features must be 2-D")
    n, d = features.shape
    flags = 0
    if labels is not None:
        flags |= FLAG_LABELS
    if ids is not None:
        flags |= FLAG_IDS
    if soft is not None:
        flags |= FLAG_SOFT
        soft = np.ascontiguousarray(soft, dtype=np.float32)
        if soft.shape != (n, class_count):
            raise ShapeError("soft block must be n x class_count")

    chunks = [_HEADER.pack(MAGIC, VERSION, n, d, class_count, flags),
              features.astype("<f4").tobytes()]
    if labels is not None:
        chunks.append(np.ascontiguousarray(labels, dtype="<i4").tobytes())
    if ids is not None:
        chunks.append(np.ascontiguousarray(ids, dtype="<u8").tobytes())
    if soft is not None:
        chunks.append(soft.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def write_embedding_file(dataset: EmbeddingSet, path) -> None:
    """Serialize an EmbeddingSet; features are stored at f32 precision."""
    write_raw(path, dataset.features, class_count=dataset.class_count,
              labels=dataset.labels, ids=dataset.ids)


def read_embedding_file(path) -> EmbeddingSet:
    rec = read_raw(path)
    if rec.d < 1 and rec.n > 0:
        raise ShapeError("embedding file must have at least one feature column")
    return EmbeddingSet(features=rec.features, class_count=rec.class_count,
                        labels=rec.labels, ids=rec.ids)


def manifest_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".manifest.json")


def write_manifest(path, dataset_name: str = "", class_names=None,
                   source_model: str = "", **extra) -> Path:
    doc = {"dataset_name": dataset_name,
           "class_names": list(class_names) if class_names is not None else None,
           "source_model": source_model}
    doc.update(extra)
    out = manifest_path(path)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return out


def read_manifest(path) -> dict | None:
    p = manifest_path(path)
    if not p.exists():
        return None
    return json.loads(p.read_text())
