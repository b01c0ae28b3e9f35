"""Walk an image tree, run a backbone, and write the export artifacts.

Rows are ordered by sorted sample id (the file's tree-relative path
without extension), the label is the image's parent directory name, and
the same tree therefore yields the same row ordering for every
backbone. Unreadable images are skipped with a warning and listed in
``{out}.manifest.json`` next to the matrix.

Exports are bitwise reproducible for a fixed seed, batch size, and
library build; changing the batch size can move values by a few ulps
because the underlying BLAS picks shape-dependent kernels.
"""

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .backbones import IMAGENET_MEAN, IMAGENET_STD, SPECS, SetupError, build
from .featwrite import write_featmat, write_labels_csv

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class InputError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExportResult:
    rows: int
    dim: int
    skipped: tuple


def collect_images(root):
    """Sorted (sample_id, path, label) for every image file under root."""
    root = Path(root)
    if not root.is_dir():
        raise InputError(f"image tree not found: {root}")
    entries = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        if path.name.startswith("."):
            continue
        rel = path.relative_to(root)
        sample_id = rel.with_suffix("").as_posix()
        if sample_id in entries:
            raise InputError(f"duplicate sample id {sample_id!r} (differing extensions)")
        entries[sample_id] = (path, path.parent.name)
    if not entries:
        raise InputError(f"no images under {root}")
    return [(sid, path, label) for sid, (path, label) in sorted(entries.items())]


def _decode(path, size):
    """Image file -> normalized CHW float32 array, or None if unreadable."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((size, size), Image.BILINEAR)
    except (UnidentifiedImageError, OSError, ValueError):
        return None
    values = np.asarray(rgb, dtype=np.float32) / 255.0
    values = (values - IMAGENET_MEAN) / IMAGENET_STD
    return np.ascontiguousarray(values.transpose(2, 0, 1), dtype=np.float32)


def export(
    images_dir,
    backbone: str,
    out_path,
    labels_path,
    weights: str = "pretrained",
    weights_file=None,
    batch_size: int = 16,
    seed: int = 0,
    device: str = "cpu",
) -> ExportResult:
    if backbone not in SPECS:
        raise SetupError(f"unknown backbone {backbone!r}, pick from {sorted(SPECS)}")
    if batch_size < 1:
        raise InputError("batch size must be >= 1")
    spec = SPECS[backbone]
    entries = collect_images(images_dir)

    torch.manual_seed(seed)  # fixes random-weight initialization
    model, feature_fn = build(backbone, weights, weights_file)
    model.to(device)

    ids, labels, skipped = [], [], []
    rows = np.empty((len(entries), spec.output_dim), dtype=np.float32)
    batch, batch_slots = [], []
    written = 0

    def flush():
        nonlocal written
        if not batch:
            return
        stacked = torch.from_numpy(np.stack(batch)).to(device)
        with torch.no_grad():
            features = feature_fn(stacked)
        block = features.cpu().numpy().astype(np.float32, copy=False)
        for slot, row in zip(batch_slots, block):
            rows[slot] = row
        written += len(batch)
        batch.clear()
        batch_slots.clear()

    for sample_id, path, label in entries:
        decoded = _decode(path, spec.input_size)
        if decoded is None:
            rel = path.relative_to(Path(images_dir)).as_posix()
            print(f"warning: skipping unreadable image {rel}", file=sys.stderr)
            skipped.append(rel)
            continue
        batch.append(decoded)
        batch_slots.append(len(ids))
        ids.append(sample_id)
        labels.append(label)
        if len(batch) == batch_size:
            flush()
    flush()

    if not ids:
        raise InputError("every image in the tree was unreadable")
    rows = rows[: len(ids)]
    write_featmat(rows, spec.name, out_path)
    write_labels_csv(labels_path, ids, labels)
    manifest = {
        "backbone": spec.name,
        "weights": weights,
        "rows": len(ids),
        "dim": spec.output_dim,
        "skipped": skipped,
    }
    Path(str(out_path) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return ExportResult(rows=len(ids), dim=spec.output_dim, skipped=tuple(skipped))
