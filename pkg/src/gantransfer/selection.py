"""Ranking candidate source models for a target dataset."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .data import DatasetHandle
from .exceptions import GanTransferError, ValidationError
from .metrics.embedding import EmbeddingNet
from .metrics.fid import fid, gaussian_stats
from .model_zoo import Checkpoint, ParamStore, load_checkpoint
from .training import generate


@dataclass(frozen=True)
class ZooEntry:
    """A candidate source generator.

    ``self_fid`` is FID(generated, own training data); it is only meaningful
    together with ``embedding_checksum``.
    """

    checkpoint: object
    dataset_id: str
    self_fid: float | None = None
    embedding_checksum: str = ""

    def load(self) -> ParamStore:
        ref = self.checkpoint
        try:
            if isinstance(ref, ParamStore):
                store = ref
            elif isinstance(ref, Checkpoint):
                store = ref.param_store
            else:
                store = load_checkpoint(ref).param_store
        except (GanTransferError, OSError) as exc:
            raise type(exc)(f"zoo entry {self.dataset_id!r} ({self.name}): {exc}") from exc
        if store.spec.role != "generator":
            raise ValidationError(f"zoo entry {self.dataset_id!r} is not a generator checkpoint")
        return store

    @property
    def name(self) -> str:
        ref = self.checkpoint
        return str(ref) if isinstance(ref, (str, Path)) else self.dataset_id


@dataclass(frozen=True, eq=False)
class SelectionConfig:
    embedder: EmbeddingNet
    n_samples: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValidationError("n_samples must be >= 2")


def _embed_real(data: DatasetHandle, embedder: EmbeddingNet):
    if data.size < 2:
        raise ValidationError(f"{data.dataset_id} needs at least 2 images")
    return embedder.embed(data.images)


def gen_vs_target_fid(entry: ZooEntry, target: DatasetHandle, n_samples: int, embedder: EmbeddingNet,
                      seed: int = 0) -> float:
    """FID between ``n_samples`` images from the entry's generator and the target data."""
    if n_samples < 2:
        raise ValidationError("n_samples must be >= 2")
    g = entry.load()
    x = generate(g, n_samples, seed)
    return fid(gaussian_stats(embedder.embed(x)), gaussian_stats(_embed_real(target, embedder)))


def real_vs_real_fid(source_data: DatasetHandle, target_data: DatasetHandle, embedder: EmbeddingNet) -> float:
    return fid(gaussian_stats(_embed_real(source_data, embedder)),
               gaussian_stats(_embed_real(target_data, embedder)))


def make_zoo_entry(checkpoint, source_data: DatasetHandle, embedder: EmbeddingNet, n_samples: int = 10_000,
                   seed: int = 0) -> ZooEntry:
    """Build an entry and compute its self-FID against ``source_data``."""
    probe = ZooEntry(checkpoint, source_data.dataset_id)
    value = gen_vs_target_fid(probe, source_data, n_samples, embedder, seed)
    return ZooEntry(checkpoint, source_data.dataset_id, value, embedder.checksum)


def rank_sources(zoo, target: DatasetHandle, cfg: SelectionConfig, source_data: dict | None = None) -> dict:
    """Rank zoo entries by ascending FID(source-generated, target-real).

    Rows also carry the entry's self-FID and, when the source dataset is
    given in ``source_data`` (keyed by dataset_id), the real-vs-real FID.
    The three distances are reported side by side and never combined.
    Entries that fail are listed under ``failures`` and left out of the ranking.
    """
    zoo = list(zoo)
    if not zoo:
        raise ValidationError("zoo is empty")
    source_data = source_data or {}
    checksum = cfg.embedder.checksum
    target_emb = _embed_real(target, cfg.embedder)
    target_stats = gaussian_stats(target_emb)
    rows, failures = [], []
    for entry in zoo:
        try:
            if entry.self_fid is not None and entry.embedding_checksum != checksum:
                raise ValidationError("self_fid was computed with a different embedding network")
            g = entry.load()
            x = generate(g, cfg.n_samples, cfg.seed)
            row = {"dataset_id": entry.dataset_id, "checkpoint": entry.name,
                   "gen_vs_target_fid": fid(gaussian_stats(cfg.embedder.embed(x)), target_stats),
                   "self_fid": entry.self_fid, "real_vs_real_fid": None}
            src = source_data.get(entry.dataset_id)
            if src is not None:
                row["real_vs_real_fid"] = fid(gaussian_stats(_embed_real(src, cfg.embedder)), target_stats)
            rows.append(row)
        except Exception as exc:  # noqa: BLE001  reported inline, ranking continues
            failures.append({"dataset_id": entry.dataset_id, "checkpoint": entry.name,
                             "error": f"{type(exc).__name__}: {exc}"})
    rows.sort(key=lambda r: (r["gen_vs_target_fid"], r["dataset_id"], r["checkpoint"]))
    for rank, row in enumerate(rows, 1):
        row["rank"] = rank
    failures.sort(key=lambda r: (r["dataset_id"], r["checkpoint"]))
    return {"target": target.dataset_id, "embedding_checksum": checksum, "n_samples": cfg.n_samples,
            "ranking": rows, "failures": failures}


def format_ranking(report: dict) -> str:
    """Plain-text table of a ranking report."""
    def num(v):
        return "-" if v is None else f"{v:.3f}"

    head = f"{'rank':>4}  {'source':<24} {'gen-vs-target':>14} {'self':>10} {'real-vs-real':>13}"
    lines = [f"target: {report['target']}  (embedding {report['embedding_checksum'][:12]})", head, "-" * len(head)]
    for r in report["ranking"]:
        lines.append(f"{r['rank']:>4}  {r['dataset_id']:<24} {num(r['gen_vs_target_fid']):>14} "
                     f"{num(r['self_fid']):>10} {num(r['real_vs_real_fid']):>13}")
    for f in report["failures"]:
        lines.append(f"   !  {f['dataset_id']:<24} {f['error']}")
    return "\n".join(lines) + "\n"


def read_zoo_manifest(path) -> list[ZooEntry]:
    """Parse a JSON list of ``{checkpoint_path, dataset_id[, self_fid, embedding_checksum]}``.

    Relative checkpoint paths are resolved against the manifest's directory.
    """
    path = Path(path)
    items = json.loads(path.read_text())
    if not isinstance(items, list):
        raise ValidationError(f"{path}: zoo manifest must be a JSON list")
    entries = []
    for i, item in enumerate(items):
        unknown = set(item) - {"checkpoint_path", "dataset_id", "self_fid", "embedding_checksum"}
        if unknown or "checkpoint_path" not in item or "dataset_id" not in item:
            raise ValidationError(f"{path}: entry {i} is malformed (unknown keys {sorted(unknown)})")
        ckpt = Path(item["checkpoint_path"])
        if not ckpt.is_absolute():
            ckpt = path.parent / ckpt
        entries.append(ZooEntry(str(ckpt), item["dataset_id"], item.get("self_fid"),
                                item.get("embedding_checksum", "")))
    return entries


def write_zoo_manifest(path, entries) -> None:
    items = []
    for e in entries:
        if not isinstance(e.checkpoint, (str, Path)):
            raise ValidationError("only file-backed zoo entries can be written to a manifest")
        item = {"checkpoint_path": str(e.checkpoint), "dataset_id": e.dataset_id}
        if e.self_fid is not None:
            item.update(self_fid=e.self_fid, embedding_checksum=e.embedding_checksum)
        items.append(item)
    Path(path).write_text(json.dumps(items, indent=2))
