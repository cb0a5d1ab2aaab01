"""Image enumeration: class-subfolder layout or an index CSV.

Row order is always sorted file path order, so the output is a pure
function of the inputs regardless of filesystem enumeration order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}


@dataclass(frozen=True)
class ImageIndex:
    paths: tuple[Path, ...]
    labels: tuple[int, ...]
    class_names: tuple[str, ...]


def index_from_folder(root) -> ImageIndex:
    """Per-class subfolders; sorted folder names become class ids 0..C-1."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"image directory not found: {root}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ValueError(f"no class subfolders under {root}")
    class_names = tuple(p.name for p in class_dirs)
    records = []
    for class_id, class_dir in enumerate(class_dirs):
        for path in class_dir.rglob("*"):
            if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES:
                records.append((path, class_id))
    records.sort(key=lambda rec: str(rec[0]))
    return ImageIndex(paths=tuple(r[0] for r in records),
                      labels=tuple(r[1] for r in records),
                      class_names=class_names)


def index_from_csv(csv_path) -> ImageIndex:
    """CSV with `path,label` columns; label strings become sorted class ids.

    Relative paths resolve against the CSV's directory.
    """
    csv_path = Path(csv_path)
    base = csv_path.parent
    rows = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                {"path", "label"} - set(reader.fieldnames):
            raise ValueError("index CSV needs `path` and `label` columns")
        for rec in reader:
            path = Path(rec["path"])
            if not path.is_absolute():
                path = base / path
            rows.append((path, rec["label"]))
    if not rows:
        raise ValueError(f"index CSV {csv_path} lists no images")
    class_names = tuple(sorted({label for _, label in rows}))
    to_id = {name: i for i, name in enumerate(class_names)}
    rows.sort(key=lambda rec: str(rec[0]))
    return ImageIndex(paths=tuple(r[0] for r in rows),
                      labels=tuple(to_id[r[1]] for r in rows),
                      class_names=class_names)


def load_index(source) -> ImageIndex:
    source = Path(source)
    if source.is_file() and source.suffix.lower() == ".csv":
        return index_from_csv(source)
    return index_from_folder(source)
