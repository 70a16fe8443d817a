"""Experiment orchestration and on-disk layout.

Every (spec, seed) pair owns ``<out>/runs/<run_id>/`` holding
``manifest.json``, ``metrics.csv``, ``checkpoints/`` and ``plots/``.
Shared artifacts (the embedding network and trained source models) are
cached under ``<out>/embedders`` and ``<out>/sources`` keyed by a hash of
everything that determines them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import shutil
import threading
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..conditional import AcGanConfig, FromCheckpoint, train_acgan
from ..data import DatasetHandle, subset
from ..exceptions import GanTransferError, ValidationError
from ..metrics import (EmbeddingNet, EvalConfig, MetricReport, MetricsLog, classifier_accuracy,
                       classifier_accuracy_eval, fid, fid_hook, gaussian_stats, train_classifier)
from ..model_zoo import FORMAT_VERSION, Checkpoint, build_network, load_checkpoint, save_checkpoint
from ..selection import SelectionConfig, ZooEntry, format_ranking, rank_sources, read_zoo_manifest
from ..training import train_gan
from ..transfer import Pretrained, Scratch, TransferConfig, run_transfer_experiment
from .config import CELL_NAMES, ExperimentSpec
from .datasets import resolve_dataset
from .plotting import plot_metrics, sample_grid

METRIC_FIELDS = ("run_id", "iteration", "metric", "key", "value", "embedding_checksum", "sample_counts")


class RunRefused(GanTransferError):
    """The run directory already holds a completed run and ``force`` was not given."""


@dataclass
class RunOutcome:
    run_id: str
    seed: int
    run_dir: Path
    status: str
    result: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "complete" and not self.errors


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str))
    tmp.replace(path)


def _merge_metrics(sources, dest: Path) -> None:
    """Concatenate metric CSVs (header once) in the given order."""
    rows = []
    for src in sources:
        if Path(src).exists():
            with open(src, newline="") as fh:
                rows.extend(list(csv.reader(fh))[1:])
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_FIELDS)
        w.writerows(rows)


class Runner:
    """Executes an :class:`ExperimentSpec` for each of its seeds."""

    def __init__(self, spec: ExperimentSpec, force: bool = False, jobs: int = 1, echo=None):
        if jobs < 1:
            raise ValidationError("jobs must be >= 1")
        self.spec = spec
        self.force = force
        self.jobs = jobs
        self.out = Path(spec.output_dir)
        self.echo = echo or (lambda msg: None)
        self._locks: dict = {}
        self._locks_guard = threading.Lock()
        self.arch = spec.arch_spec()

    # ------------------------------------------------------------ helpers

    def _lock(self, key) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def dataset(self, ref: str) -> DatasetHandle:
        return resolve_dataset(ref, self.arch.image_size)

    def data_ref(self, key: str, default: str | None = None) -> str:
        ref = self.spec.data.get(key, default)
        if not ref:
            raise ValidationError(f"[data] {key} is required for kind={self.spec.kind}")
        return ref

    def embedder(self) -> EmbeddingNet:
        """Shared frozen embedding network, trained once per configuration and cached."""
        cfg = dict(self.spec.embedder)
        refs = cfg.pop("data", None)
        if refs is None:
            keys = ("source", "target", "reference")
            refs = " + ".join(dict.fromkeys(self.spec.data[k] for k in keys if self.spec.data.get(k)))
            refs = refs or " + ".join(self.spec.data.get("sources", []) + self.spec.data.get("targets", []))
        if not refs:
            raise ValidationError("no data to train the embedding network on; set [embedder] data")
        seed = cfg.pop("seed", 0)
        key = _digest({"data": refs, "size": self.arch.image_size, "seed": seed, **cfg})
        path = self.out / "embedders" / f"{key}.ckpt"
        with self._lock(path):
            if path.exists():
                return EmbeddingNet(load_checkpoint(path).param_store)
            self.echo(f"training embedding network on {refs}")
            data = self.dataset(refs)
            store = train_classifier(data, seed, role="embedder", **cfg)
            save_checkpoint(Checkpoint.wrap(store, dataset_id=data.dataset_id, seed=seed), path)
            return EmbeddingNet(store)

    def eval_config(self, reference: DatasetHandle, embedder: EmbeddingNet) -> EvalConfig:
        ev = {k: v for k, v in self.spec.eval.items() if k != "smoothing_window"}
        return EvalConfig(embedder, reference, **ev)

    def source_model(self, ref: str) -> tuple[Path, Path]:
        """Generator and discriminator checkpoints of the source model for ``ref``."""
        given_g, given_d = self.spec.data.get("source_generator"), self.spec.data.get("source_discriminator")
        if given_g and given_d and ref == self.spec.data.get("source"):
            return Path(given_g), Path(given_d)
        cfg = self.spec.source_cfg()
        key = _digest({"data": ref, "arch": self.arch.to_dict(), "cfg": cfg.to_dict()})
        base = self.out / "sources" / key
        g_path, d_path = base / "generator.ckpt", base / "discriminator.ckpt"
        with self._lock(base):
            if g_path.exists() and d_path.exists():
                return g_path, d_path
            self.echo(f"training source model on {ref} ({cfg.iterations} iterations)")
            data = self.dataset(ref)
            (base / "train_log.csv").unlink(missing_ok=True)
            res = train_gan(build_network(self.arch, cfg.seed),
                            build_network(self.arch.replace(role="discriminator"), cfg.seed),
                            data, cfg, run_id=f"source-{key}", log_path=base / "train_log.csv")
            for store, path in ((res.generator, g_path), (res.discriminator, d_path)):
                save_checkpoint(Checkpoint.wrap(store, iteration=cfg.iterations, dataset_id=data.dataset_id,
                                                seed=cfg.seed, metadata={"role": store.spec.role}), path)
            _write_json(base / "source.json", {"data": ref, "arch": self.arch.to_dict(), "cfg": cfg.to_dict()})
            return g_path, d_path

    def grid(self, ft_cfg, g_ckpt, d_ckpt) -> list[TransferConfig]:
        cells = []
        for name in self.spec.grid:
            pre_g, pre_d = CELL_NAMES[name]
            cells.append(TransferConfig(Pretrained(str(g_ckpt)) if pre_g else Scratch(),
                                        Pretrained(str(d_ckpt)) if pre_d else Scratch(), ft_cfg))
        return cells

    def manifest(self, run_id: str, seed: int, status: str, embedder: EmbeddingNet | None = None,
                 extra: dict | None = None) -> dict:
        spec = self.spec
        ac = spec.acgan
        return {
            "run_id": run_id, "seed": seed, "kind": spec.kind, "status": status,
            "spec": spec.to_dict(), "package_version": __version__, "checkpoint_format_version": FORMAT_VERSION,
            "architecture": self.arch.to_dict(),
            "source_training": spec.source_cfg().to_dict(),
            "finetune_defaults": spec.finetune_cfg(1000).to_dict(),
            "defaults": {
                "gp_lambda": spec.finetune_cfg(1000).gp_lambda, "n_critic": spec.finetune_cfg(1000).n_critic,
                "alpha_g": ac.get("alpha_g", 1.0), "alpha_d": ac.get("alpha_d", 1.0),
                "noise_dim": self.arch.noise_dim,
            },
            "embedding_checksum": None if embedder is None else embedder.checksum,
            **(extra or {}),
        }

    # -------------------------------------------------------------- entry

    def run(self) -> list[RunOutcome]:
        seeds = list(self.spec.seeds)
        if self.jobs > 1 and len(seeds) > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                return list(pool.map(self.run_seed, seeds))
        return [self.run_seed(s) for s in seeds]

    def run_seed(self, seed: int) -> RunOutcome:
        run_id = self.spec.run_id(seed)
        run_dir = self.out / "runs" / run_id
        manifest_path = run_dir / "manifest.json"
        if manifest_path.exists():
            previous = json.loads(manifest_path.read_text())
            if self.force:
                shutil.rmtree(run_dir)
            elif previous.get("status") == "complete":
                raise RunRefused(f"run {run_id} already exists in {run_dir}; use --force to overwrite")
        run_dir.mkdir(parents=True, exist_ok=True)
        embedder = None
        _write_json(manifest_path, self.manifest(run_id, seed, "running"))
        handler = getattr(self, f"_run_{self.spec.kind}")
        try:
            if self.spec.kind != "classifier_eval":
                embedder = self.embedder()
                _write_json(manifest_path, self.manifest(run_id, seed, "running", embedder))
            result, errors = handler(run_id, seed, run_dir, embedder)
        except Exception as exc:  # noqa: BLE001  recorded in the manifest, surfaced via exit status
            errors = [f"{type(exc).__name__}: {exc}"]
            _write_json(manifest_path, self.manifest(run_id, seed, "failed", embedder,
                                                     {"errors": errors, "traceback": traceback.format_exc()}))
            return RunOutcome(run_id, seed, run_dir, "failed", errors=errors)
        status = "complete" if not errors else "incomplete"
        artifacts = sorted(str(p.relative_to(run_dir)) for p in run_dir.rglob("*") if p.is_file())
        _write_json(manifest_path, self.manifest(run_id, seed, status, embedder,
                                                 {"errors": errors, "artifacts": artifacts}))
        return RunOutcome(run_id, seed, run_dir, status, result, errors)

    def _plot(self, run_dir: Path, metric: str = "fid", key: str = "") -> None:
        window = self.spec.eval.get("smoothing_window", 20)
        plot_metrics(run_dir / "metrics.csv", run_dir / "plots" / f"{metric}.svg", metric=metric,
                     window=window, key=key)

    # --------------------------------------------------------------- kinds

    def _run_train_source(self, run_id, seed, run_dir, embedder):
        data = self.dataset(self.data_ref("source"))
        reference = self.dataset(self.spec.data.get("reference") or self.data_ref("source"))
        cfg = self.spec.source_cfg().replace(seed=seed)
        ev = self.eval_config(reference, embedder)
        log = MetricsLog(run_dir / "metrics.csv")
        if log.path.exists():
            log.path.unlink()
        traj = []
        res = train_gan(build_network(self.arch, seed), build_network(self.arch.replace(role="discriminator"), seed),
                        data, cfg, hooks=[fid_hook(ev, run_id, log, traj)], run_id=run_id,
                        log_path=None)
        ckpts = {}
        for store in (res.generator, res.discriminator):
            path = run_dir / "checkpoints" / f"{store.spec.role}.ckpt"
            save_checkpoint(Checkpoint.wrap(store, iteration=cfg.iterations, dataset_id=data.dataset_id,
                                            seed=seed), path)
            ckpts[store.spec.role] = str(path)
        self._plot(run_dir)
        sample_grid(res.generator, 8, 8, seed, run_dir / "plots" / "samples.png")
        result = {"final_fid": traj[-1][1], "trajectory": traj, "checkpoints": ckpts}
        _write_json(run_dir / "result.json", result)
        return result, []

    def _transfer(self, run_id, seed, out_dir: Path, target: DatasetHandle, embedder, g_ckpt, d_ckpt):
        reference = self.dataset(self.spec.data.get("reference") or self.data_ref("target"))
        ev = self.eval_config(reference, embedder)
        ft = self.spec.finetune_cfg(target.size)
        grid = self.grid(ft, g_ckpt, d_ckpt)
        return run_transfer_experiment([str(g_ckpt), str(d_ckpt)], target, grid, ev, self.arch,
                                       out_dir=out_dir, seed=seed, jobs=self.jobs, run_prefix=f"{run_id}/")

    @staticmethod
    def _cell_summary(report) -> tuple[list, list]:
        cells, errors = [], []
        for c in report["cells"]:
            if c["status"] != "ok":
                errors.append(f"cell {c['index']} ({c['label']}): {c['error']}")
            cells.append({k: c.get(k) for k in ("index", "label", "status", "final_fid", "final_iw", "seed",
                                                "run_id", "trajectory", "checkpoints")})
        return cells, errors

    def _run_transfer_grid(self, run_id, seed, run_dir, embedder):
        g_ckpt, d_ckpt = self.source_model(self.data_ref("source"))
        target = self.dataset(self.data_ref("target"))
        report = self._transfer(run_id, seed, run_dir, target, embedder, g_ckpt, d_ckpt)
        _merge_metrics([run_dir / "cells" / str(i) / "metrics.csv" for i in range(len(report["cells"]))],
                       run_dir / "metrics.csv")
        cells, errors = self._cell_summary(report)
        if any(c["status"] == "ok" for c in cells):
            self._plot(run_dir)
        result = {"cells": cells, "source": {"generator": str(g_ckpt), "discriminator": str(d_ckpt)}}
        _write_json(run_dir / "result.json", result)
        return result, errors

    def _run_size_sweep(self, run_id, seed, run_dir, embedder):
        g_ckpt, d_ckpt = self.source_model(self.data_ref("source"))
        full = self.dataset(self.data_ref("target"))
        reference = self.dataset(self.spec.data.get("reference") or self.data_ref("target"))
        ref_stats = gaussian_stats(embedder.embed(reference.images))
        rows, errors, metric_files = [], [], []
        for n in self.spec.sizes:
            if n > full.size:
                errors.append(f"size {n} exceeds the {full.size} available target images")
                continue
            part = subset(full, n, seed)
            report = self._transfer(f"{run_id}/n{n}", seed, run_dir / f"size{n}", part, embedder, g_ckpt, d_ckpt)
            cells, errs = self._cell_summary(report)
            errors.extend(f"size {n}: {e}" for e in errs)
            metric_files += [run_dir / f"size{n}" / "cells" / str(c["index"]) / "metrics.csv" for c in cells]
            with np.errstate(all="ignore"):
                lower = fid(gaussian_stats(embedder.embed(part.images)), ref_stats) if n >= 2 else None
            rows.append({"size": n, "subset_vs_full_fid": lower,
                         "cells": {c["label"]: c["final_fid"] for c in cells}, "detail": cells})
        _merge_metrics(metric_files, run_dir / "metrics.csv")
        if rows:
            self._plot(run_dir)
        result = {"sizes": rows}
        _write_json(run_dir / "result.json", result)
        (run_dir / "summary.txt").write_text(format_sweep(rows))
        return result, errors

    def _run_source_target_matrix(self, run_id, seed, run_dir, embedder):
        sources = self.spec.data.get("sources") or [self.data_ref("source")]
        targets = self.spec.data.get("targets") or [self.data_ref("target")]
        matrix, errors, metric_files = {}, [], []
        for si, s_ref in enumerate(sources):
            g_ckpt, d_ckpt = self.source_model(s_ref)
            for ti, t_ref in enumerate(targets):
                target = self.dataset(t_ref)
                out = run_dir / f"s{si}_t{ti}"
                report = self._transfer(f"{run_id}/s{si}t{ti}", seed, out, target, embedder, g_ckpt, d_ckpt)
                cells, errs = self._cell_summary(report)
                errors.extend(f"{s_ref} -> {t_ref}: {e}" for e in errs)
                metric_files += [out / "cells" / str(c["index"]) / "metrics.csv" for c in cells]
                matrix.setdefault(s_ref, {})[t_ref] = {c["label"]: c["final_fid"] for c in cells}
        _merge_metrics(metric_files, run_dir / "metrics.csv")
        result = {"sources": sources, "targets": targets, "matrix": matrix}
        _write_json(run_dir / "result.json", result)
        (run_dir / "summary.txt").write_text(format_matrix(matrix, sources, targets))
        return result, errors

    def _run_acgan(self, run_id, seed, run_dir, embedder):
        data = self.dataset(self.data_ref("target"))
        reference = self.dataset(self.spec.data.get("reference") or self.data_ref("target"))
        ev = self.eval_config(reference, embedder)
        ac = dict(self.spec.acgan)
        inits = ac.pop("inits", ["scratch", "pretrained"])
        cfg = AcGanConfig(n_classes=data.n_classes, base=self.spec.finetune_cfg(data.size).replace(seed=seed), **ac)
        log = MetricsLog(run_dir / "metrics.csv")
        if log.path.exists():
            log.path.unlink()
        out, errors = {}, []
        for name in inits:
            try:
                if name == "scratch":
                    init = "scratch"
                elif name == "pretrained":
                    g_ckpt, d_ckpt = self.source_model(self.data_ref("source"))
                    init = FromCheckpoint(str(g_ckpt), str(d_ckpt))
                else:
                    raise ValidationError(f"unknown AC-GAN init {name!r}; use scratch or pretrained")
                traj = []
                res = train_acgan(cfg, init, data, hooks=[fid_hook(ev, f"{run_id}/{name}", log, traj, per_class=True)],
                                  layout=self.arch, run_id=f"{run_id}/{name}")
                path = run_dir / "checkpoints" / name / "generator.ckpt"
                save_checkpoint(Checkpoint.wrap(res.generator, iteration=cfg.base.iterations,
                                                dataset_id=data.dataset_id, seed=seed), path)
                save_checkpoint(Checkpoint.wrap(res.discriminator, iteration=cfg.base.iterations,
                                                dataset_id=data.dataset_id, seed=seed),
                                path.with_name("discriminator.ckpt"))
                sample_grid(res.generator, min(data.n_classes, 10), 8, seed, run_dir / "plots" / f"samples_{name}.png")
                out[name] = {"trajectory": traj, "first_fid_all": traj[0][1], "final_fid_all": traj[-1][1],
                             "checkpoint": str(path)}
            except Exception as exc:  # noqa: BLE001  one init failing must not hide the other
                errors.append(f"{name}: {type(exc).__name__}: {exc}")
        if out:
            self._plot(run_dir, metric="fid_all")
        result = {"config": cfg.to_dict(), "inits": out}
        _write_json(run_dir / "result.json", result)
        return result, errors

    def _run_select_source(self, run_id, seed, run_dir, embedder):
        target = self.dataset(self.data_ref("target"))
        n = self.spec.selection.get("n_samples", 10_000)
        source_data = {}
        if self.spec.data.get("zoo"):
            zoo = read_zoo_manifest(self.spec.data["zoo"])
        else:
            zoo = []
            for ref in self.spec.data.get("sources") or [self.data_ref("source")]:
                g_ckpt, _ = self.source_model(ref)
                data = self.dataset(ref)
                source_data[ref] = data
                zoo.append(ZooEntry(str(g_ckpt), ref))
        report = rank_sources(zoo, target, SelectionConfig(embedder, n, seed), source_data=source_data)
        _write_json(run_dir / "ranking.json", report)
        (run_dir / "ranking.txt").write_text(format_ranking(report))
        _merge_metrics([], run_dir / "metrics.csv")
        errors = [f"{f['dataset_id']}: {f['error']}" for f in report["failures"]]
        return report, errors

    def _run_classifier_eval(self, run_id, seed, run_dir, embedder):
        c = self.spec.classifier
        data = self.dataset(c.get("data") or self.data_ref("target"))
        train, held = data.split(0.8, seed)
        store = train_classifier(train, c.get("seed", seed), iterations=c.get("iterations", 600))
        save_checkpoint(Checkpoint.wrap(store, dataset_id=data.dataset_id, seed=seed),
                        run_dir / "checkpoints" / "classifier.ckpt")
        real = classifier_accuracy(store, held.images, held.labels)
        g = load_checkpoint(self.data_ref("generator")).param_store
        gen = classifier_accuracy_eval(store, g, c.get("n_per_class", 1000), seed)
        log = MetricsLog(run_dir / "metrics.csv")
        if log.path.exists():
            log.path.unlink()
        log.append(*[MetricReport(run_id, 0, "accuracy", v, store.checksum, str(gen["n_per_class"]), key=str(k))
                     for k, v in gen["per_class"].items()],
                   MetricReport(run_id, 0, "accuracy", gen["avg"], store.checksum, str(gen["n_per_class"]), key="avg"))
        result = {"real_accuracy": real, "generated_accuracy": gen}
        _write_json(run_dir / "result.json", result)
        return result, []


def format_sweep(rows) -> str:
    labels = sorted({lab for r in rows for lab in r["cells"]})
    head = f"{'size':>7} {'subset-vs-full':>15} " + " ".join(f"{lab:>22}" for lab in labels)
    lines = [head, "-" * len(head)]
    for r in rows:
        vals = " ".join(f"{_fmt(r['cells'].get(lab)):>22}" for lab in labels)
        lines.append(f"{r['size']:>7} {_fmt(r['subset_vs_full_fid']):>15} {vals}")
    return "\n".join(lines) + "\n"


def format_matrix(matrix, sources, targets) -> str:
    lines = ["final FID (rows: source, columns: target; cell label G=..,D=..)"]
    for s in sources:
        for t in targets:
            cells = ", ".join(f"{k}: {_fmt(v)}" for k, v in sorted(matrix.get(s, {}).get(t, {}).items()))
            lines.append(f"{s} -> {t}: {cells}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.3f}"


def run_experiment(spec: ExperimentSpec, force: bool = False, jobs: int = 1, echo=None) -> list[RunOutcome]:
    return Runner(spec, force=force, jobs=jobs, echo=echo).run()
