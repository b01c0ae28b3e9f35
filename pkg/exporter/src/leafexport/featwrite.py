"""FEATMAT1 and labels-CSV writers.

FEATMAT1 layout: magic ``FEATMAT1``, three little-endian u32 fields
(rows, cols, tag byte length), the UTF-8 provenance tag, then row-major
float32 values. Writes go to a temporary file in the target directory
and are renamed into place, so a crash never leaves a partial file
under the final name.
"""

import csv
import os
import struct
import tempfile

import numpy as np

MAGIC = b"FEATMAT1"


class WriteError(RuntimeError):
    pass


def _atomic_write(path, payload: bytes) -> None:
    directory = os.path.dirname(os.fspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".export-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_featmat(values: np.ndarray, tag: str, path) -> None:
    values = np.ascontiguousarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise WriteError(f"need a 2-D matrix, got shape {values.shape}")
    if not np.isfinite(values).all():
        bad = int(np.flatnonzero(~np.isfinite(values.ravel()))[0])
        raise WriteError(
            f"non-finite value at row {bad // values.shape[1]}, "
            f"column {bad % values.shape[1]}"
        )
    encoded = tag.encode("utf-8")
    header = MAGIC + struct.pack(
        "<III", values.shape[0], values.shape[1], len(encoded)
    )
    _atomic_write(path, header + encoded + values.tobytes())


def write_labels_csv(path, sample_ids, labels) -> None:
    """One (sample_id, label) row per matrix row, same order."""
    if len(sample_ids) != len(labels):
        raise WriteError("sample id and label counts differ")
    import io

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(["sample_id", "label"])
    for sample_id, label in zip(sample_ids, labels):
        writer.writerow([sample_id, label])
    _atomic_write(path, buffer.getvalue().encode("utf-8"))
