"""Initializing target GANs from source checkpoints and running transfer grids."""

from __future__ import annotations

import json
import traceback
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import DatasetHandle
from .exceptions import TransferError, ValidationError
from .model_zoo import (ArchitectureSpec, Checkpoint, ParamStore, build_network, init_tensor,
                        layout_compatible, load_checkpoint, param_manifest, save_checkpoint)
from .training import TrainConfig, train_gan

COPIED, FRESH, ADAPTED = "copied", "fresh", "adapted"


@dataclass(frozen=True)
class Scratch:
    """Random initialization via :func:`build_network`."""

    def to_dict(self) -> dict:
        return {"init": "scratch"}


@dataclass(frozen=True)
class Pretrained:
    """Initialization from a checkpoint.

    ``ref`` is a checkpoint path, a loaded :class:`Checkpoint` or a
    :class:`ParamStore`.
    """

    ref: object

    def load(self) -> ParamStore:
        ref = self.ref
        if isinstance(ref, ParamStore):
            return ref
        if isinstance(ref, Checkpoint):
            return ref.param_store
        return load_checkpoint(ref).param_store

    def to_dict(self) -> dict:
        ref = self.ref
        if isinstance(ref, (str, Path)):
            return {"init": "pretrained", "checkpoint": str(ref)}
        store = ref.param_store if isinstance(ref, Checkpoint) else ref
        return {"init": "pretrained", "param_checksum": store.checksum}


@dataclass(frozen=True)
class TransferConfig:
    generator_init: Scratch | Pretrained = field(default_factory=Scratch)
    discriminator_init: Scratch | Pretrained = field(default_factory=Scratch)
    finetune_cfg: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        for name in ("generator_init", "discriminator_init"):
            if not isinstance(getattr(self, name), (Scratch, Pretrained)):
                raise ValidationError(f"{name} must be Scratch() or Pretrained(ref)")

    @property
    def label(self) -> str:
        short = lambda i: "pre" if isinstance(i, Pretrained) else "scratch"  # noqa: E731
        return f"G={short(self.generator_init)},D={short(self.discriminator_init)}"

    def to_dict(self) -> dict:
        return {"generator_init": self.generator_init.to_dict(),
                "discriminator_init": self.discriminator_init.to_dict(),
                "finetune_cfg": self.finetune_cfg.to_dict()}


@dataclass(frozen=True, eq=False)
class Provenance:
    """Per-parameter origin of a transferred store, in manifest order."""

    entries: tuple

    def as_dict(self) -> dict:
        return OrderedDict(self.entries)

    def count(self, label: str) -> int:
        return sum(1 for _, v in self.entries if v == label)

    def all(self, label: str) -> bool:
        return all(v == label for _, v in self.entries)


def surgery_expand_input(weight, new_in: int, seed: int) -> torch.Tensor:
    """Widen a ``[out, in_src]`` weight matrix to ``[out, new_in]``.

    The first ``in_src`` columns are copied; the rest come from the layer's
    own initializer evaluated at the new shape, so their scale matches a
    freshly built ``[out, new_in]`` layer.
    """
    weight = torch.as_tensor(weight)
    if weight.ndim != 2:
        raise ValidationError(f"expected a 2-D weight matrix, got shape {tuple(weight.shape)}")
    out_dim, in_src = weight.shape
    if new_in <= in_src:
        raise ValidationError(f"new_in={new_in} must exceed the current input width {in_src}")
    fresh = init_tensor("fc.weight", (out_dim, new_in), torch.Generator().manual_seed(int(seed)))
    return torch.cat([weight.detach().to(torch.float32), fresh[:, in_src:]], dim=1)


def _first_mismatch(source: ArchitectureSpec, target: ArchitectureSpec) -> str:
    src = dict(param_manifest(source))
    for name, shape in param_manifest(target):
        if src.get(name) != shape:
            found = src.get(name)
            return f"{name} (source {found if found is not None else 'missing'}, target {shape})"
    fields = [k for k, v in source.to_dict().items()
              if k not in ("conditioning", "n_classes") and v != getattr(target, k)]
    return f"spec fields {fields}"


def _check_compatible(source: ArchitectureSpec, target: ArchitectureSpec, what: str):
    if not layout_compatible(source, target):
        raise TransferError(f"{what} checkpoint is incompatible with the target at parameter "
                            f"{_first_mismatch(source, target)}")


def _copy_matching(source: ParamStore, fresh: ParamStore) -> tuple[ParamStore, list]:
    params, prov = OrderedDict(), []
    for name, t in fresh.params.items():
        s = source.params.get(name)
        if s is not None and s.shape == t.shape:
            params[name], label = s.clone(), COPIED
        else:
            params[name], label = t, FRESH
        prov.append((name, label))
    return ParamStore(fresh.spec, params), prov


def _transfer_generator(source: ParamStore, target: ArchitectureSpec, seed: int):
    _check_compatible(source.spec, target, "generator")
    if source.spec.conditioning == target.conditioning and source.spec.n_classes == target.n_classes:
        store = source.replace()
        return store, [(n, COPIED) for n in store.params]
    if source.spec.is_conditional:
        raise TransferError("only unconditional generators can be converted to a conditional target "
                            f"(source conditioning={source.spec.conditioning}, n_classes={source.spec.n_classes})")
    from .conditional import condition_bnorm_init, condition_concat_init

    if target.conditioning == "concat":
        store = condition_concat_init(source, target.n_classes, seed)
        prov = [(n, ADAPTED if n == "fc.weight" else COPIED) for n in store.params]
    else:
        store = condition_bnorm_init(source, target.n_classes)
        prov = [(n, ADAPTED if store.params[n].shape != source.params[n].shape else COPIED)
                for n in store.params]
    return store, prov


def apply_transfer(target_spec: ArchitectureSpec, tc: TransferConfig, seed: int,
                   d_spec: ArchitectureSpec | None = None) -> tuple[ParamStore, ParamStore, dict]:
    """Initial generator and discriminator for a transfer configuration.

    ``target_spec`` describes the generator; the discriminator spec defaults to
    the same layout with ``role="discriminator"``. Pretrained parameters are
    copied bit-exactly wherever names and shapes match. Anything else (an
    auxiliary class head missing from an unconditional source) is freshly
    initialized. Returns ``(g, d, provenance)`` with
    ``provenance = {"generator": Provenance, "discriminator": Provenance}``.
    """
    if target_spec.role != "generator":
        raise ValidationError("target_spec must describe the generator")
    d_spec = d_spec or target_spec.replace(role="discriminator")
    target_spec.validate()
    d_spec.validate()

    if isinstance(tc.generator_init, Pretrained):
        g, g_prov = _transfer_generator(tc.generator_init.load(), target_spec, seed)
    else:
        g = build_network(target_spec, seed)
        g_prov = [(n, FRESH) for n in g.params]

    if isinstance(tc.discriminator_init, Pretrained):
        src = tc.discriminator_init.load()
        _check_compatible(src.spec, d_spec, "discriminator")
        d, d_prov = _copy_matching(src, build_network(d_spec, seed))
    else:
        d = build_network(d_spec, seed)
        d_prov = [(n, FRESH) for n in d.params]

    return g, d, {"generator": Provenance(tuple(g_prov)), "discriminator": Provenance(tuple(d_prov))}


# ------------------------------------------------------------ experiments

def cell_seed(experiment_seed: int, index: int) -> int:
    """Independent per-cell seed derived from ``(experiment_seed, index)``."""
    return int(np.random.SeedSequence([int(experiment_seed), int(index)]).generate_state(1)[0])


def _run_cell(index, tc, target_spec, target_data, eval_cfg, seed, cell_dir, ckpt_dir, run_prefix):
    # Imported here: metrics depends on training, transfer is imported by the package root.
    from .metrics.evaluate import evaluate_iw, fid_hook
    from .metrics.report import MetricsLog, MetricReport

    run_id = f"{run_prefix}cell{index}"
    cfg = tc.finetune_cfg.replace(seed=seed)
    g, d, prov = apply_transfer(target_spec, tc, seed)
    trajectory, log = [], None
    metrics_path = None
    if cell_dir is not None:
        metrics_path = cell_dir / "metrics.csv"
        for stale in (metrics_path, cell_dir / "train_log.csv"):
            stale.unlink(missing_ok=True)  # partial logs from an interrupted attempt
        log = MetricsLog(metrics_path)
    hooks = [fid_hook(eval_cfg, run_id, log, trajectory)] if eval_cfg is not None else []
    res = train_gan(g, d, target_data, cfg, hooks=hooks, run_id=run_id,
                    log_path=None if cell_dir is None else cell_dir / "train_log.csv")
    final_iw = None
    if eval_cfg is not None and eval_cfg.iw_iterations > 0:
        final_iw = evaluate_iw(res.generator, d.spec, eval_cfg, seed)
        if log is not None:
            log.append(MetricReport(run_id, cfg.iterations, "iw", final_iw, eval_cfg.embedder.checksum,
                                    eval_cfg.sample_counts()))
    checkpoints = {}
    if cell_dir is not None:
        for name, store in (("generator", res.generator), ("discriminator", res.discriminator)):
            path = save_checkpoint(Checkpoint.wrap(store, iteration=cfg.iterations,
                                                   dataset_id=target_data.dataset_id, seed=seed),
                                   ckpt_dir / f"{name}.ckpt")
            checkpoints[name] = str(path)
    return {
        "index": index, "run_id": run_id, "label": tc.label, "status": "ok", "seed": seed,
        "config": tc.to_dict(),
        "provenance": {k: {"copied": p.count(COPIED), "fresh": p.count(FRESH), "adapted": p.count(ADAPTED)}
                       for k, p in prov.items()},
        "final_fid": trajectory[-1][1] if trajectory else None,
        "final_iw": final_iw,
        "trajectory": [list(p) for p in trajectory],
        "trajectory_path": None if metrics_path is None else str(metrics_path),
        "checkpoints": checkpoints,
        "param_checksums": {"generator": res.generator.checksum, "discriminator": res.discriminator.checksum},
    }


def run_transfer_experiment(source_ckpts, target_data: DatasetHandle, grid, eval_cfg,
                            target_spec: ArchitectureSpec, out_dir=None, seed: int = 0,
                            jobs: int = 1, run_prefix: str = "") -> dict:
    """Fine-tune every grid cell on ``target_data`` and collect FID/IW results.

    ``source_ckpts`` lists the checkpoints the grid refers to; they are loaded
    and checked against ``target_spec`` before any training. Each cell trains
    with its own seed ``cell_seed(seed, index)``. A failing cell is recorded
    with its error and the others still run. With ``out_dir`` set, each cell
    writes ``cells/<index>/{result.json, metrics.csv, train_log.csv}`` and
    ``checkpoints/cell<index>/{generator,discriminator}.ckpt``; cells with a
    ``result.json`` are not recomputed on a rerun.
    """
    grid = list(grid)
    report = {"target": target_data.dataset_id, "seed": int(seed),
              "eval": None if eval_cfg is None else eval_cfg.to_dict(), "cells": []}
    if not grid:
        return report
    d_spec = target_spec.replace(role="discriminator")
    for ref in source_ckpts:
        store = Pretrained(ref).load()
        target = target_spec if store.spec.role == "generator" else d_spec
        _check_compatible(store.spec, target, store.spec.role)

    out_dir = None if out_dir is None else Path(out_dir)

    def run(index, tc):
        cell_dir = None if out_dir is None else out_dir / "cells" / str(index)
        ckpt_dir = None if out_dir is None else out_dir / "checkpoints" / f"cell{index}"
        if cell_dir is not None:
            done = cell_dir / "result.json"
            if done.exists():
                return json.loads(done.read_text())
            cell_dir.mkdir(parents=True, exist_ok=True)
        s = cell_seed(seed, index)
        try:
            result = _run_cell(index, tc, target_spec, target_data, eval_cfg, s, cell_dir, ckpt_dir, run_prefix)
        except Exception as exc:  # noqa: BLE001  one broken cell must not stop the grid
            result = {"index": index, "label": tc.label, "status": "failed", "seed": s,
                      "config": tc.to_dict(), "error": f"{type(exc).__name__}: {exc}",
                      "traceback": traceback.format_exc(limit=3)}
            return result  # failures are not persisted, so a rerun retries them
        if cell_dir is not None:
            _write_json(cell_dir / "result.json", result)
        return result

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda a: run(*a), enumerate(grid)))
    else:
        results = [run(i, tc) for i, tc in enumerate(grid)]
    report["cells"] = results
    if out_dir is not None:
        _write_json(out_dir / "report.json", report)
    return report


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True))
    tmp.replace(path)


def standard_grid(g_ckpt, d_ckpt, finetune_cfg: TrainConfig) -> list[TransferConfig]:
    """The four whole-network configurations: (scratch|pre) x (scratch|pre)."""
    out = []
    for g_init in (Scratch(), Pretrained(g_ckpt)):
        for d_init in (Scratch(), Pretrained(d_ckpt)):
            out.append(TransferConfig(g_init, d_init, finetune_cfg))
    return out
