"""Embedded-sample cache files.

Layout::

    b"GTEC" | u32 version | u32 checksum_len | checksum (ASCII) | u64 count | u32 dim
           | count * dim little-endian float64 values
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ..exceptions import ChecksumMismatchError, CheckpointError, TruncatedCheckpointError
from ..validation import check_samples

MAGIC = b"GTEC"
VERSION = 1


def save_embeddings(path, embeddings, embedding_checksum: str) -> Path:
    x = check_samples(embeddings, "embeddings", 1)
    tag = embedding_checksum.encode("ascii")
    header = struct.pack("<4sII", MAGIC, VERSION, len(tag)) + tag + struct.pack("<QI", *x.shape)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(x.astype("<f8").tobytes())
    os.replace(tmp, path)
    return path


def load_embeddings(path, expected_checksum: str | None = None) -> tuple[np.ndarray, str]:
    """Return ``(embeddings [count, dim], checksum)``.

    With ``expected_checksum`` a cache written by a different embedder is rejected.
    """
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise TruncatedCheckpointError(f"{path}: file too short")
    magic, version, n_tag = struct.unpack_from("<4sII", data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not an embedding cache")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported cache version {version}")
    lo = 12 + n_tag
    if len(data) < lo + 12:
        raise TruncatedCheckpointError(f"{path}: header truncated")
    checksum = data[12:lo].decode("ascii")
    count, dim = struct.unpack_from("<QI", data, lo)
    lo += 12
    if len(data) != lo + count * dim * 8:
        raise TruncatedCheckpointError(f"{path}: payload has {len(data) - lo} bytes, expected {count * dim * 8}")
    if expected_checksum is not None and checksum != expected_checksum:
        raise ChecksumMismatchError(f"{path}: cached with embedder {checksum[:12]}, expected {expected_checksum[:12]}")
    x = np.frombuffer(data, dtype="<f8", offset=lo).reshape(count, dim).astype(np.float64)
    return x, checksum
