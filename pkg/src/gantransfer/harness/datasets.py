"""Dataset references used in experiment configs.

Forms::

    synthetic:<kind>:<n>:<seed>
    folder:<path>[:<manifest.csv>[:<vocabulary.csv>]]
    <ref> + <ref> + ...          (concatenation, classes kept apart)

Relative folder paths resolve against the data root.
"""

from __future__ import annotations

import threading

from ..data import DatasetHandle, concat, load_image_folder, make_synthetic, resolve_data_path
from ..exceptions import ValidationError

_cache: dict = {}
_lock = threading.Lock()


def resolve_dataset(ref: str, image_size: int) -> DatasetHandle:
    ref = ref.strip()
    key = (ref, image_size)
    with _lock:
        if key in _cache:
            return _cache[key]
    parts = [p.strip() for p in ref.split("+")]
    if len(parts) > 1:
        ds = concat([resolve_dataset(p, image_size) for p in parts], dataset_id=" + ".join(parts))
    else:
        ds = _resolve_one(ref, image_size)
    with _lock:
        _cache[key] = ds
    return ds


def _resolve_one(ref: str, image_size: int) -> DatasetHandle:
    scheme, _, rest = ref.partition(":")
    if scheme == "synthetic":
        fields = rest.split(":")
        if len(fields) != 3:
            raise ValidationError(f"synthetic dataset refs look like synthetic:<kind>:<n>:<seed>, got {ref!r}")
        kind, n, seed = fields
        try:
            return make_synthetic(kind, int(n), image_size, int(seed))
        except ValueError as exc:
            raise ValidationError(f"bad dataset ref {ref!r}: {exc}") from exc
    if scheme == "folder":
        fields = rest.split(":")
        path = resolve_data_path(fields[0])
        labels = resolve_data_path(fields[1]) if len(fields) > 1 and fields[1] else None
        vocab = resolve_data_path(fields[2]) if len(fields) > 2 and fields[2] else None
        return load_image_folder(path, image_size, labels=labels, vocabulary=vocab)
    raise ValidationError(f"unknown dataset ref scheme in {ref!r}; use synthetic:... or folder:...")


def clear_cache() -> None:
    with _lock:
        _cache.clear()
