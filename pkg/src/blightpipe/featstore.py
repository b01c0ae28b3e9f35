"""Feature-matrix storage: the FEATMAT1 binary format, column provenance,
concatenation, standardization, labels, and stratified fold assignment.

FEATMAT1 layout (little-endian):

    bytes 0..7    magic ASCII "FEATMAT1"
    bytes 8..11   uint32 row count
    bytes 12..15  uint32 column count
    bytes 16..19  uint32 source-tag byte length T
    bytes 20..20+T  UTF-8 source tag
    then rows*cols IEEE-754 float32 values, row-major

The source tag doubles as column provenance. A bare tag ("darknet53-gap")
claims every column. A composite tag is "+"-joined "name:width" entries
("darknet53-gap:1024+alexnet-fc7:4096") whose widths must sum to the column
count. Loading keeps the tag verbatim so a load/write round trip is
byte-identical.
"""

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, FormatError, StratificationError

MAGIC = b"FEATMAT1"
HEADER_FIXED = 20  # magic + rows + cols + tag length

POSITIVE_LABEL = "late_blight"
NEGATIVE_LABEL = "healthy"


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense row-major float32 features with column provenance.

    ``provenance`` lists (source_tag, (start, stop)) column spans that are
    disjoint, ordered, and cover [0, cols). ``source_tag`` is the exact
    header string the spans were parsed from (or canonically built from).
    """

    values: np.ndarray
    source_tag: str = ""
    provenance: tuple = field(default=None)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise FormatError("feature matrix must be 2-dimensional")
        object.__setattr__(self, "values", values)
        if self.provenance is None:
            object.__setattr__(
                self, "provenance", parse_provenance(self.source_tag, values.shape[1])
            )

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def parse_provenance(tag: str, cols: int) -> tuple:
    """Parse a source tag into column spans covering [0, cols)."""
    if "+" not in tag and ":" not in tag:
        return ((tag, (0, cols)),)
    spans = []
    start = 0
    for part in tag.split("+"):
        name, sep, width = part.rpartition(":")
        if not sep:
            raise FormatError(f"composite source tag part {part!r} lacks a width")
        try:
            width = int(width)
        except ValueError:
            raise FormatError(f"bad span width in source tag part {part!r}") from None
        if width <= 0:
            raise FormatError(f"non-positive span width in source tag part {part!r}")
        spans.append((name, (start, start + width)))
        start += width
    if start != cols:
        raise FormatError(
            f"source tag spans cover {start} columns but the matrix has {cols}"
        )
    return tuple(spans)


def provenance_tag(provenance) -> str:
    """Canonical tag string for a list of (name, (start, stop)) spans."""
    return "+".join(f"{name}:{stop - start}" for name, (start, stop) in provenance)


def load_featmat(path) -> FeatureMatrix:
    """Read and validate a FEATMAT1 file."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_FIXED or raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a FEATMAT1 file", offset=0)
    rows, cols, tag_len = struct.unpack_from("<III", raw, 8)
    header_size = HEADER_FIXED + tag_len
    if len(raw) < header_size:
        raise FormatError(f"{path}: truncated source tag", offset=len(raw))
    try:
        tag = raw[HEADER_FIXED:header_size].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: source tag is not UTF-8", offset=HEADER_FIXED) from exc

    expected = header_size + rows * cols * 4
    if len(raw) != expected:
        # offset of the first missing/extra byte
        bad = min(len(raw), expected)
        kind = "truncated" if len(raw) < expected else "oversized"
        raise FormatError(
            f"{path}: {kind} payload, expected {rows}x{cols} float32 values",
            offset=bad - (bad - header_size) % 4 if len(raw) < expected else expected,
        )
    values = np.frombuffer(raw, dtype="<f4", offset=header_size).reshape(rows, cols)
    finite = np.isfinite(values.ravel())
    if not finite.all():
        idx = int(np.argmin(finite))
        raise FormatError(
            f"{path}: non-finite value at row {idx // cols}, column {idx % cols}",
            offset=header_size + idx * 4,
        )
    return FeatureMatrix(values.copy(), source_tag=tag)


def write_featmat(m: FeatureMatrix, path) -> None:
    tag = m.source_tag.encode("utf-8")
    header = MAGIC + struct.pack("<III", m.rows, m.cols, len(tag)) + tag
    body = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + body)


def concat(parts) -> FeatureMatrix:
    """Column-stack matrices that share row count and order."""
    parts = list(parts)
    if not parts:
        raise AlignmentError("concat needs at least one part")
    if len(parts) == 1:
        return parts[0]
    rows = parts[0].rows
    for i, part in enumerate(parts):
        if part.rows != rows:
            raise AlignmentError(
                f"part {i} ({part.source_tag or 'untagged'}) has {part.rows} rows, "
                f"expected {rows}"
            )
    values = np.concatenate([p.values for p in parts], axis=1)
    provenance = []
    offset = 0
    for part in parts:
        for name, (start, stop) in part.provenance:
            provenance.append((name, (offset + start, offset + stop)))
        offset += part.cols
    provenance = tuple(provenance)
    return FeatureMatrix(values, source_tag=provenance_tag(provenance), provenance=provenance)


@dataclass(frozen=True)
class ColumnStats:
    """Per-column mean and population standard deviation.

    Columns with stddev below 1e-12 are flagged constant and standardize
    to 0 instead of dividing by the vanishing scale.
    """

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def identity(cls, cols: int) -> "ColumnStats":
        return cls(
            mean=np.zeros(cols),
            std=np.ones(cols),
            constant=np.zeros(cols, dtype=bool),
        )


def standardize_fit(train: FeatureMatrix) -> ColumnStats:
    if train.rows < 2:
        raise AlignmentError("standardization needs at least 2 rows")
    values = train.values.astype(np.float64)
    mean = values.mean(axis=0)
    std = values.std(axis=0)  # population: divide by n
    constant = std < 1e-12
    return ColumnStats(mean=mean, std=std, constant=constant)


def standardize_apply(m: FeatureMatrix, stats: ColumnStats) -> FeatureMatrix:
    if stats.mean.shape[0] != m.cols:
        raise AlignmentError(
            f"stats cover {stats.mean.shape[0]} columns, matrix has {m.cols}"
        )
    safe_std = np.where(stats.constant, 1.0, stats.std)
    out = (m.values.astype(np.float64) - stats.mean) / safe_std
    out[:, stats.constant] = 0.0
    return FeatureMatrix(
        out.astype(np.float32), source_tag=m.source_tag, provenance=m.provenance
    )


@dataclass(frozen=True)
class LabeledDataset:
    """Features plus per-row binary labels (+1 late blight, -1 healthy)."""

    features: FeatureMatrix
    labels: np.ndarray
    sample_ids: tuple

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        if labels.shape[0] != self.features.rows:
            raise AlignmentError(
                f"{labels.shape[0]} labels for {self.features.rows} feature rows"
            )
        if len(self.sample_ids) != self.features.rows:
            raise AlignmentError("sample_ids length must match feature rows")
        if not np.isin(labels, (-1, 1)).all():
            raise FormatError("labels must be +1 or -1")

    @property
    def rows(self) -> int:
        return self.features.rows


def load_labels(path) -> tuple[tuple, np.ndarray]:
    """Read the labels CSV; row order defines feature-matrix row order."""
    ids, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "label"]:
            raise FormatError(f"{path}: labels header must be 'sample_id,label'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 fields")
            sample_id, label = row
            if label == POSITIVE_LABEL:
                labels.append(1)
            elif label == NEGATIVE_LABEL:
                labels.append(-1)
            else:
                raise FormatError(
                    f"{path}:{lineno}: label must be "
                    f"{POSITIVE_LABEL!r} or {NEGATIVE_LABEL!r}, got {label!r}"
                )
            ids.append(sample_id)
    return tuple(ids), np.asarray(labels, dtype=np.int8)


def write_labels(path, sample_ids, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"])
        for sample_id, label in zip(sample_ids, labels):
            writer.writerow(
                [sample_id, POSITIVE_LABEL if label > 0 else NEGATIVE_LABEL]
            )


def subset(ds: LabeledDataset, rows=None, cols=None) -> LabeledDataset:
    """Restrict a dataset to given row and/or column indices (copies)."""
    values = ds.features.values
    ids = ds.sample_ids
    labels = ds.labels
    if rows is not None:
        rows = np.asarray(rows)
        values = values[rows]
        labels = labels[rows]
        ids = tuple(ids[int(i)] for i in rows)
    if cols is not None:
        values = values[:, np.asarray(cols)]
    return LabeledDataset(
        features=FeatureMatrix(np.ascontiguousarray(values)),
        labels=labels,
        sample_ids=ids,
    )


def load_dataset(featmat_path, labels_path) -> LabeledDataset:
    features = load_featmat(featmat_path)
    ids, labels = load_labels(labels_path)
    return LabeledDataset(features=features, labels=labels, sample_ids=ids)


@dataclass(frozen=True)
class FoldAssignment:
    """Per-row fold index in [0, k)."""

    fold_of: np.ndarray
    k: int

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)


def make_folds(labels: np.ndarray, k: int, seed: int) -> FoldAssignment:
    """Stratified k-fold assignment, deterministic in ``seed``.

    Each class is shuffled independently and dealt round-robin, so per-fold
    class counts are within one of n_class / k.
    """
    from .rng import CounterRng

    labels = np.asarray(labels)
    fold_of = np.full(labels.shape[0], -1, dtype=np.int64)
    for class_index, value in enumerate(sorted(np.unique(labels))):
        members = np.flatnonzero(labels == value)
        if members.shape[0] < k:
            raise StratificationError(
                f"class {value} has {members.shape[0]} samples, needs >= {k}"
            )
        rng = CounterRng(seed, stream=class_index)
        rng.shuffle(members)
        fold_of[members] = np.arange(members.shape[0]) % k
    return FoldAssignment(fold_of=fold_of, k=k)
