"""Evaluation hooks that log FID (and optionally IW) during training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import DatasetHandle
from ..exceptions import ValidationError
from ..model_zoo import ParamStore
from ..training import Hook, TrainConfig, generate
from .critic import independent_wasserstein
from .embedding import EmbeddingNet
from .fid import GaussianStats, fid, fid_per_class, gaussian_stats
from .report import MetricReport, MetricsLog


@dataclass(frozen=True, eq=False)
class EvalConfig:
    """How a run is evaluated.

    ``reference`` is held-out real data of the target domain. Generated
    samples always use ``sample_seed`` so successive checkpoints are compared
    on the same noise.
    """

    embedder: EmbeddingNet
    reference: DatasetHandle
    every: int = 100
    n_samples: int = 2000
    sample_seed: int = 123
    iw_iterations: int = 0
    iw_batch_size: int = 64

    def __post_init__(self):
        if self.every < 1:
            raise ValidationError("evaluation interval must be >= 1")
        if self.n_samples < 2:
            raise ValidationError("n_samples must be >= 2")
        if self.reference.size < 2:
            raise ValidationError("reference set needs at least 2 images")

    @property
    def reference_stats(self) -> GaussianStats:
        cached = self.__dict__.get("_ref_stats")
        if cached is None:
            cached = gaussian_stats(self.embedder.embed(self.reference.images))
            object.__setattr__(self, "_ref_stats", cached)
        return cached

    @property
    def reference_embeddings(self) -> np.ndarray:
        cached = self.__dict__.get("_ref_emb")
        if cached is None:
            cached = self.embedder.embed(self.reference.images)
            object.__setattr__(self, "_ref_emb", cached)
        return cached

    def sample_counts(self) -> str:
        return f"{self.n_samples}/{self.reference.size}"

    def to_dict(self) -> dict:
        return {"reference": self.reference.dataset_id, "every": self.every, "n_samples": self.n_samples,
                "sample_seed": self.sample_seed, "iw_iterations": self.iw_iterations,
                "embedding_checksum": self.embedder.checksum}


def evaluate_fid(g: ParamStore, ev: EvalConfig) -> float:
    x = generate(g, ev.n_samples, ev.sample_seed)
    return fid(gaussian_stats(ev.embedder.embed(x)), ev.reference_stats)


def evaluate_class_fid(g: ParamStore, ev: EvalConfig) -> dict:
    """Per-class, averaged and class-agnostic FID of a conditional generator.

    Labels cycle through the classes so every class gets the same share.
    """
    if not g.spec.is_conditional:
        raise ValidationError("per-class FID needs a conditional generator")
    if not ev.reference.labeled:
        raise ValidationError("per-class FID needs a labeled reference set")
    labels = np.arange(ev.n_samples) % g.spec.n_classes
    x = generate(g, ev.n_samples, ev.sample_seed, labels=labels)
    return fid_per_class(ev.reference_embeddings, ev.reference.labels, ev.embedder.embed(x), labels,
                         n_classes=g.spec.n_classes)


def evaluate_iw(g: ParamStore, d_spec, ev: EvalConfig, seed: int) -> float:
    cfg = TrainConfig(batch_size=ev.iw_batch_size, iterations=ev.iw_iterations, seed=seed)
    x_gen = generate(g, ev.n_samples, ev.sample_seed)
    return independent_wasserstein(ev.reference.images, x_gen, cfg, d_spec)["iw"]


def fid_hook(ev: EvalConfig, run_id: str, log: MetricsLog | None = None, trajectory: list | None = None,
             per_class: bool = False) -> Hook:
    """Hook that logs FID rows; ``trajectory`` collects ``(iteration, fid)`` pairs.

    With ``per_class`` it logs ``fid_per_class`` rows (key = class), the
    average (key ``avg``) and ``fid_all``; the trajectory then tracks ``fid_all``.
    """
    checksum, counts = ev.embedder.checksum, ev.sample_counts()

    def fn(iteration, g, d):
        rows = []
        if per_class:
            res = evaluate_class_fid(g, ev)
            for c, v in res["per_class"].items():
                rows.append(MetricReport(run_id, iteration, "fid_per_class", v, checksum, counts, key=str(c)))
            rows.append(MetricReport(run_id, iteration, "fid_per_class", res["avg"], checksum, counts, key="avg"))
            rows.append(MetricReport(run_id, iteration, "fid_all", res["all"], checksum, counts))
            value = res["all"]
        else:
            value = evaluate_fid(g, ev)
            rows.append(MetricReport(run_id, iteration, "fid", value, checksum, counts))
        if log is not None:
            log.append(*rows)
        if trajectory is not None:
            trajectory.append((iteration, value))

    return Hook(ev.every, fn)


def iterations_to_reach(trajectory, threshold: float) -> int | None:
    """First logged iteration whose value is at or below ``threshold`` (None if never)."""
    for it, v in sorted(trajectory):
        if v <= threshold:
            return it
    return None


def classifier_accuracy_eval(ref_classifier, g, n_per_class: int, seed: int, n_classes: int | None = None) -> dict:
    """Fraction of class-conditioned samples that the reference classifier assigns to their class.

    ``g`` is a conditional generator store or a callable ``g(labels, seed)``
    returning images for the given label array.
    """
    if n_per_class < 1:
        raise ValidationError("n_per_class must be >= 1")
    if isinstance(g, ParamStore):
        if not g.spec.is_conditional:
            raise ValidationError("classifier accuracy needs a conditional generator")
        n_classes = g.spec.n_classes
        labels = np.repeat(np.arange(n_classes), n_per_class)
        images = generate(g, len(labels), seed, labels=labels)
    elif callable(g):
        if n_classes is None:
            raise ValidationError("n_classes is required for a callable generator")
        labels = np.repeat(np.arange(n_classes), n_per_class)
        images = np.asarray(g(labels, seed), dtype=np.float32)
    else:
        raise ValidationError("g must be a conditional ParamStore or a callable")
    net = ref_classifier if isinstance(ref_classifier, EmbeddingNet) else EmbeddingNet(ref_classifier)
    pred = net.predict(images)
    per_class = {int(c): float(np.mean(pred[labels == c] == c)) for c in range(n_classes)}
    return {"per_class": per_class, "avg": float(np.mean(list(per_class.values()))), "n_per_class": n_per_class}
