"""Bit-exact checkpoint files.

Layout::

    b"GPTK" | u32 format_version | u64 header_len | header (UTF-8 JSON)
           | payload (little-endian float32, names sorted) | sha256 trailer

The trailer hashes every byte before it.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..exceptions import (CheckpointError, CheckpointVersionError, ChecksumMismatchError,
                          TruncatedCheckpointError)
from .spec import ArchitectureSpec
from .store import ParamStore

MAGIC = b"GPTK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_HASH_LEN = 32


@dataclass(eq=False)
class Checkpoint:
    spec: ArchitectureSpec
    param_store: ParamStore
    iteration: int = 0
    dataset_id: str = ""
    seed: int = 0
    format_version: int = FORMAT_VERSION
    metadata: dict = field(default_factory=dict)

    @classmethod
    def wrap(cls, store: ParamStore, **kwargs) -> "Checkpoint":
        return cls(spec=store.spec, param_store=store, **kwargs)


def _encode(ckpt: Checkpoint) -> bytes:
    store = ckpt.param_store
    manifest, chunks, offset = [], [], 0
    for name in sorted(store.params):
        arr = store.params[name].numpy().astype("<f4", copy=False)
        raw = arr.tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "spec": ckpt.spec.to_dict(),
        "iteration": int(ckpt.iteration),
        "dataset_id": ckpt.dataset_id,
        "seed": int(ckpt.seed),
        "param_checksum": store.checksum,
        "manifest": manifest,
        "metadata": ckpt.metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, ckpt.format_version, len(header_bytes)) + header_bytes + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Write ``ckpt`` atomically (temp file + rename)."""
    if ckpt.param_store.spec != ckpt.spec:
        raise CheckpointError("checkpoint spec does not match its parameter store")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_encode(ckpt))
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise TruncatedCheckpointError(f"{path}: file too short for a checkpoint prefix")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format_version {version} is not supported (expected {FORMAT_VERSION})")
    start = _PREFIX.size
    if len(data) < start + header_len:
        raise TruncatedCheckpointError(f"{path}: header truncated")
    try:
        header = json.loads(data[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumMismatchError(f"{path}: header is corrupted ({exc})") from exc
    payload_start = start + header_len
    payload_len = sum(m["nbytes"] for m in header["manifest"])
    expected = payload_start + payload_len + _HASH_LEN
    if len(data) < expected:
        raise TruncatedCheckpointError(f"{path}: expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise CheckpointError(f"{path}: {len(data) - expected} unexpected trailing bytes")
    body, trailer = data[:-_HASH_LEN], data[-_HASH_LEN:]
    if hashlib.sha256(body).digest() != trailer:
        raise ChecksumMismatchError(f"{path}: content hash does not match trailer")

    spec = ArchitectureSpec.from_dict(header["spec"])
    params = OrderedDict()
    for m in header["manifest"]:
        lo = payload_start + m["offset"]
        arr = np.frombuffer(data, dtype="<f4", count=m["nbytes"] // 4, offset=lo).reshape(m["shape"])
        params[m["name"]] = torch.from_numpy(arr.astype(np.float32))
    store = ParamStore(spec, params)
    if store.checksum != header["param_checksum"]:
        raise ChecksumMismatchError(f"{path}: parameter checksum mismatch")
    return Checkpoint(spec=spec, param_store=store, iteration=header["iteration"],
                      dataset_id=header["dataset_id"], seed=header["seed"],
                      format_version=version, metadata=header.get("metadata", {}))
