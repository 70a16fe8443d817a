"""Dataset handles, image-folder ingestion, subsetting and synthetic domains.

Images are stored as float32 arrays ``[N, C, S, S]`` scaled to [-1, 1].
The synthetic kinds are rendered procedurally:

* ``shapes_a`` / ``shapes_b`` -- outlined shapes drawn with the same stroke
  width and palette; ``shapes_a`` puts one large shape near the centre,
  ``shapes_b`` puts a smaller one off-centre over a horizon line, so the pair
  is related at the pixel-statistics level but differs in layout.
* ``faces_toy`` -- a skin-toned oval with eyes and hair band; unrelated.
* ``eight_gaussians_rgb`` -- a coloured blob at one of eight positions on a
  ring, the image analogue of the eight-Gaussians toy problem.
"""

from __future__ import annotations

import csv
import os
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import ValidationError

SYNTHETIC_KINDS = ("eight_gaussians_rgb", "shapes_a", "shapes_b", "faces_toy")
DATA_ROOT_ENV = "GANTRANSFER_DATA_ROOT"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True, eq=False)
class DatasetHandle:
    """An in-memory image dataset.

    ``ids`` are item identifiers in the root dataset; they survive subsetting,
    so provenance of every item can be traced and compared as a multiset.
    """

    dataset_id: str
    kind: str
    images: np.ndarray
    labels: np.ndarray | None = None
    n_classes: int = 0
    seed: int | None = None
    ids: np.ndarray | None = None
    label_names: tuple = ()
    errors: tuple = ()

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValidationError("images must have shape [N, C, S, S]")
        if self.ids is None:
            object.__setattr__(self, "ids", np.arange(len(self.images), dtype=np.int64))
        if self.labels is not None and len(self.labels) != len(self.images):
            raise ValidationError("labels and images differ in length")

    @property
    def size(self) -> int:
        return int(self.images.shape[0])

    def __len__(self):
        return self.size

    @property
    def image_size(self) -> int:
        return int(self.images.shape[-1])

    @property
    def channels(self) -> int:
        return int(self.images.shape[1])

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def take(self, index, dataset_id: str | None = None) -> "DatasetHandle":
        index = np.asarray(index, dtype=np.int64)
        return replace(self, dataset_id=dataset_id or self.dataset_id,
                       images=self.images[index],
                       labels=None if self.labels is None else self.labels[index],
                       ids=self.ids[index])

    def epoch_order(self, epoch: int, seed: int) -> np.ndarray:
        """Permutation used for ``epoch``; a pure function of (dataset_id, epoch, seed)."""
        key = zlib.crc32(self.dataset_id.encode())
        rng = np.random.default_rng([int(seed), int(epoch), key])
        return rng.permutation(self.size)

    def batches(self, batch_size: int, seed: int, epoch: int = 0):
        """Yield ``(images, labels)`` batches forever, reshuffling every epoch.

        Batches never straddle epochs; when the dataset is smaller than the
        batch size, one batch is the whole (shuffled) dataset.
        """
        if batch_size < 1:
            raise ValidationError("batch_size must be positive")
        while True:
            order = self.epoch_order(epoch, seed)
            step = min(batch_size, self.size)
            for lo in range(0, self.size - step + 1, step):
                idx = order[lo:lo + step]
                yield self.images[idx], (None if self.labels is None else self.labels[idx])
            epoch += 1

    def class_counts(self) -> np.ndarray:
        if self.labels is None:
            raise ValidationError(f"dataset {self.dataset_id} is unlabeled")
        return np.bincount(self.labels, minlength=self.n_classes)

    def split(self, fraction: float, seed: int) -> tuple["DatasetHandle", "DatasetHandle"]:
        """Disjoint random split into ``(first, rest)``."""
        order = np.random.default_rng([int(seed), 7919]).permutation(self.size)
        k = int(round(self.size * fraction))
        return (self.take(np.sort(order[:k]), f"{self.dataset_id}/split{seed}a"),
                self.take(np.sort(order[k:]), f"{self.dataset_id}/split{seed}b"))


def concat(handles, dataset_id: str, relabel: bool = True) -> DatasetHandle:
    """Stack datasets; with ``relabel`` each handle's classes get a disjoint label range."""
    handles = list(handles)
    if not handles:
        raise ValidationError("nothing to concatenate")
    images = np.concatenate([h.images for h in handles])
    labels, names, offset = [], [], 0
    for h in handles:
        if relabel:
            if h.labels is None:
                labels.append(np.full(h.size, offset, dtype=np.int64))
                names.append(h.dataset_id)
                offset += 1
            else:
                labels.append(h.labels + offset)
                names.extend(f"{h.dataset_id}:{n}" for n in (h.label_names or range(h.n_classes)))
                offset += h.n_classes
        else:
            if h.labels is None:
                raise ValidationError("relabel=False requires labeled inputs")
            labels.append(h.labels)
            offset = max(offset, h.n_classes)
    return DatasetHandle(dataset_id=dataset_id, kind="synthetic", images=images,
                         labels=np.concatenate(labels).astype(np.int64), n_classes=offset,
                         label_names=tuple(str(n) for n in names))


# ---------------------------------------------------------------- subsetting

def _stratified_quotas(counts: np.ndarray, n: int) -> np.ndarray:
    k = len(counts)
    quotas = np.minimum(np.full(k, n // k), counts)
    # Hand out the remainder (and any shortfall from small classes) in class order.
    remaining = n - quotas.sum()
    while remaining > 0:
        room = np.flatnonzero(quotas < counts)
        for c in room[:remaining]:
            quotas[c] += 1
        remaining = n - quotas.sum()
    return quotas


def subset(ds: DatasetHandle, n: int, seed: int) -> DatasetHandle:
    """Sample ``n`` items without replacement; stratified by class when labeled."""
    if not 1 <= n <= ds.size:
        raise ValidationError(f"subset size {n} outside [1, {ds.size}]")
    rng = np.random.default_rng([int(seed), int(n), 104729])
    if ds.labels is None:
        index = rng.choice(ds.size, size=n, replace=False)
    else:
        counts = np.bincount(ds.labels, minlength=ds.n_classes)
        present = np.flatnonzero(counts)
        quotas = _stratified_quotas(counts[present], n)
        parts = []
        for c, q in zip(present, quotas):
            members = np.flatnonzero(ds.labels == c)
            parts.append(rng.choice(members, size=int(q), replace=False))
        index = np.concatenate(parts)
    index = np.sort(index)
    return ds.take(index, f"{ds.dataset_id}/n{n}s{seed}")


# ------------------------------------------------------------ image folders

def data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "."))


def resolve_data_path(path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else data_root() / p


def _load_image(path: Path, image_size: int) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (image_size, image_size):
            im = im.resize((image_size, image_size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32)
    return (arr.transpose(2, 0, 1) * 2.0 / 255.0 - 1.0).astype(np.float32)


def read_label_manifest(path) -> list[tuple[str, int]]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "relative_path":
                continue
            rows.append((row[0], int(row[1])))
    return rows


def read_label_vocabulary(path) -> dict[int, str]:
    vocab = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "label_index":
                continue
            vocab[int(row[0])] = row[1]
    return vocab


def write_label_manifest(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["relative_path", "label_index"])
        w.writerows(rows)


def load_image_folder(path, image_size: int, labels=None, vocabulary=None) -> DatasetHandle:
    """Load PNG/JPEG images from a flat or one-subfolder-per-class directory.

    ``labels`` is an optional manifest CSV (``relative_path,label_index``).
    Without a manifest, a folder whose images all live in subfolders is
    labeled by subfolder name (sorted); a flat folder is unlabeled. Files that
    fail to decode are reported in ``errors`` and skipped.
    """
    root = resolve_data_path(path)
    if not root.is_dir():
        raise ValidationError(f"{root} is not a directory")
    errors = []
    label_names: tuple = ()
    if labels is not None:
        entries = read_label_manifest(resolve_data_path(labels))
        if vocabulary is not None:
            vocab = read_label_vocabulary(resolve_data_path(vocabulary))
            label_names = tuple(vocab[i] for i in sorted(vocab))
    else:
        files = sorted(p for p in root.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
        subdirs = sorted({p.parent.relative_to(root).as_posix() for p in files} - {"."})
        if files and subdirs and all(p.parent != root for p in files):
            label_names = tuple(subdirs)
            lookup = {name: i for i, name in enumerate(subdirs)}
            entries = [(p.relative_to(root).as_posix(), lookup[p.parent.relative_to(root).as_posix()])
                       for p in files]
        else:
            entries = [(p.relative_to(root).as_posix(), -1) for p in files]
    if not entries:
        raise ValidationError(f"{root} contains no images")

    images, ys = [], []
    for rel, y in entries:
        try:
            images.append(_load_image(root / rel, image_size))
            ys.append(y)
        except FileNotFoundError:
            errors.append((rel, "missing file"))
        except (OSError, ValueError) as exc:
            errors.append((rel, f"undecodable: {exc}"))
    if not images:
        raise ValidationError(f"no decodable images in {root}: {errors[:3]}")
    labeled = labels is not None or bool(label_names)
    y = np.asarray(ys, dtype=np.int64) if labeled else None
    n_classes = 0
    if labeled:
        n_classes = max(len(label_names), int(y.max()) + 1)
    return DatasetHandle(dataset_id=f"folder:{root.as_posix()}", kind="image_folder",
                         images=np.stack(images), labels=y, n_classes=n_classes,
                         label_names=label_names, errors=tuple(errors))


# ------------------------------------------------------- synthetic domains

_PALETTE = np.array([[0.95, 0.30, 0.25], [0.25, 0.75, 0.35], [0.30, 0.45, 0.95],
                     [0.95, 0.85, 0.25], [0.85, 0.35, 0.85], [0.30, 0.85, 0.90]], dtype=np.float32)
_SHAPES = ("square", "circle", "triangle", "cross")
_SUPERSAMPLE = 4


def _grid(size: int):
    s = size * _SUPERSAMPLE
    c = (np.arange(s, dtype=np.float32) + 0.5) / s
    return np.meshgrid(c, c, indexing="xy")


def _downsample(img: np.ndarray) -> np.ndarray:
    c, s, _ = img.shape
    f = _SUPERSAMPLE
    return img.reshape(c, s // f, f, s // f, f).mean(axis=(2, 4))


def _segment_distance(px, py, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    t = np.clip(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0)
    return np.hypot(px - ax - t * vx, py - ay - t * vy)


def _stroke_mask(shape: str, gx, gy, cx, cy, r, width):
    if shape == "circle":
        return np.abs(np.hypot(gx - cx, gy - cy) - r) < width / 2
    if shape == "square":
        pts = [(cx - r, cy - r), (cx + r, cy - r), (cx + r, cy + r), (cx - r, cy + r)]
    elif shape == "triangle":
        pts = [(cx, cy - r), (cx + 0.87 * r, cy + 0.5 * r), (cx - 0.87 * r, cy + 0.5 * r)]
    else:
        segs = [((cx - r, cy - r), (cx + r, cy + r)), ((cx - r, cy + r), (cx + r, cy - r))]
        d = np.minimum(*[_segment_distance(gx, gy, *a, *b) for a, b in segs])
        return d < width / 2
    edges = list(zip(pts, pts[1:] + pts[:1]))
    d = np.min([_segment_distance(gx, gy, *a, *b) for a, b in edges], axis=0)
    return d < width / 2


def _render_shapes(n, size, rng, layout):
    gx, gy = _grid(size)
    labels = np.arange(n) % len(_SHAPES)
    rng.shuffle(labels)
    out = np.empty((n, 3, size, size), dtype=np.float32)
    for i, label in enumerate(labels):
        bg = 0.12 + 0.06 * rng.random()
        img = np.full((3,) + gx.shape, bg, dtype=np.float32)
        color = _PALETTE[rng.integers(len(_PALETTE))]
        width = 0.11
        if layout == "a":
            cx, cy = 0.5 + 0.06 * rng.standard_normal(2)
            r = rng.uniform(0.28, 0.36)
        else:
            horizon = rng.uniform(0.68, 0.78)
            img[:, np.abs(gy - horizon) < width / 2] = 0.55
            cx = rng.choice([0.3, 0.7]) + 0.04 * rng.standard_normal()
            cy = 0.36 + 0.04 * rng.standard_normal()
            r = rng.uniform(0.16, 0.22)
        mask = _stroke_mask(_SHAPES[label], gx, gy, cx, cy, r, width)
        img[:, mask] = color[:, None]
        out[i] = _downsample(img)
    return out, labels.astype(np.int64), _SHAPES


def _render_faces(n, size, rng):
    gx, gy = _grid(size)
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    out = np.empty((n, 3, size, size), dtype=np.float32)
    hair = np.array([[0.20, 0.12, 0.05], [0.95, 0.85, 0.45]], dtype=np.float32)
    for i, label in enumerate(labels):
        img = np.empty((3,) + gx.shape, dtype=np.float32)
        img[:] = np.array([0.55, 0.75, 0.95], dtype=np.float32)[:, None, None] * rng.uniform(0.9, 1.0)
        cx, cy = 0.5 + 0.03 * rng.standard_normal(2)
        face = ((gx - cx) / 0.30) ** 2 + ((gy - cy) / 0.38) ** 2 < 1
        skin = np.array([0.95, 0.75, 0.60], dtype=np.float32) * rng.uniform(0.8, 1.0)
        img[:, face] = skin[:, None]
        top = face & (gy < cy - 0.18)
        img[:, top] = hair[label][:, None]
        for ex in (cx - 0.12, cx + 0.12):
            eye = np.hypot(gx - ex, gy - (cy - 0.05)) < 0.06
            img[:, eye] = 0.05
        mouth = (np.abs(gy - (cy + 0.18)) < 0.04) & (np.abs(gx - cx) < 0.12)
        img[:, mouth] = np.array([0.6, 0.1, 0.1], dtype=np.float32)[:, None]
        out[i] = _downsample(img)
    return out, labels.astype(np.int64), ("dark_hair", "blond_hair")


def _render_eight_gaussians(n, size, rng):
    gx, gy = _grid(size)
    labels = np.arange(n) % 8
    rng.shuffle(labels)
    out = np.empty((n, 3, size, size), dtype=np.float32)
    for i, label in enumerate(labels):
        angle = 2 * np.pi * label / 8
        cx, cy = 0.5 + 0.3 * np.cos(angle), 0.5 + 0.3 * np.sin(angle)
        cx, cy = np.array([cx, cy]) + 0.04 * rng.standard_normal(2)
        hue = label / 8
        color = 0.5 + 0.5 * np.cos(2 * np.pi * (hue + np.array([0.0, 1 / 3, 2 / 3])))
        blob = np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2 * 0.1 ** 2))
        img = (color[:, None, None] * blob[None]).astype(np.float32)
        out[i] = _downsample(img)
    return out, labels.astype(np.int64), tuple(f"mode{k}" for k in range(8))


def make_synthetic(kind: str, n: int, image_size: int, seed: int, noise: float = 0.03) -> DatasetHandle:
    """Render a labeled synthetic dataset; bit-identical for equal arguments."""
    if kind not in SYNTHETIC_KINDS:
        raise ValidationError(f"unknown synthetic kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = np.random.default_rng([int(seed), SYNTHETIC_KINDS.index(kind), int(image_size)])
    if kind == "shapes_a":
        imgs, labels, names = _render_shapes(n, image_size, rng, "a")
    elif kind == "shapes_b":
        imgs, labels, names = _render_shapes(n, image_size, rng, "b")
    elif kind == "faces_toy":
        imgs, labels, names = _render_faces(n, image_size, rng)
    else:
        imgs, labels, names = _render_eight_gaussians(n, image_size, rng)
    if noise:
        imgs = imgs + noise * rng.standard_normal(imgs.shape).astype(np.float32)
    imgs = np.clip(imgs * 2.0 - 1.0, -1.0, 1.0).astype(np.float32)
    return DatasetHandle(dataset_id=f"{kind}-n{n}-s{seed}-{image_size}px", kind="synthetic",
                         images=imgs, labels=labels, n_classes=len(names), seed=seed,
                         label_names=tuple(names))
