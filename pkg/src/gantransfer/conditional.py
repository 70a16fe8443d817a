"""AC-GAN objectives, conditioning surgery and conditional training."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .data import DatasetHandle
from .exceptions import ValidationError
from .model_zoo import ArchitectureSpec, ParamStore
from .training import (LOG_EPS, TrainConfig, TrainResult, WGANGPLosses, _generator,
                       run_adversarial, wgan_gp_d_loss, wgan_gp_g_loss)
from .transfer import Pretrained, Scratch, TransferConfig, apply_transfer, surgery_expand_input
from .validation import check_labels

CONDITIONINGS = ("concat", "cond_bnorm")


@dataclass(frozen=True)
class AcGanConfig:
    """Loss weights and conditioning for AC-GAN training.

    ``alpha_g`` and ``alpha_d`` weight the auxiliary classification terms of
    the generator and discriminator losses.
    """

    conditioning: str = "cond_bnorm"
    n_classes: int = 10
    alpha_g: float = 1.0
    alpha_d: float = 1.0
    base: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.conditioning not in CONDITIONINGS:
            raise ValidationError(f"conditioning must be one of {CONDITIONINGS}, got {self.conditioning!r}")
        if self.n_classes < 2:
            raise ValidationError("n_classes must be >= 2")
        if self.alpha_g < 0 or self.alpha_d < 0:
            raise ValidationError("alpha_g and alpha_d must be >= 0")

    def to_dict(self) -> dict:
        return {"conditioning": self.conditioning, "n_classes": self.n_classes,
                "alpha_g": self.alpha_g, "alpha_d": self.alpha_d, "base": self.base.to_dict()}


@dataclass(frozen=True)
class FromCheckpoint:
    """Start from an unconditional source; ``discriminator=None`` keeps D from scratch."""

    generator: object
    discriminator: object = None


# ------------------------------------------------------------------ losses

def class_nll(logits: torch.Tensor, y: torch.Tensor, eps: float = LOG_EPS) -> torch.Tensor:
    """``-E[log P(C = y)]`` under the softmax of ``logits``, probabilities clamped at ``eps``."""
    probs = F.softmax(logits, dim=1).clamp_min(eps)
    return -torch.log(probs.gather(1, y[:, None])).mean()


def _module(net):
    return net.to_module(train=False) if isinstance(net, ParamStore) else net


def _aux_logits(d_mod, x):
    out = d_mod(x)
    if not isinstance(out, tuple) or out[1] is None:
        raise ValidationError("discriminator has no auxiliary class head")
    return out


def acgan_g_loss(d, g, z, y_prime, alpha_g: float = 1.0) -> torch.Tensor:
    """WGAN-GP generator loss plus ``alpha_g`` times the class NLL of ``y_prime``.

    With ``alpha_g == 0`` the result is exactly :func:`wgan_gp_g_loss`.
    """
    if alpha_g < 0:
        raise ValidationError("alpha_g must be >= 0")
    g_mod, d_mod = _module(g), _module(d)
    y_prime = check_labels(y_prime, g_mod.spec.n_classes, z.shape[0], name="y_prime")
    if alpha_g == 0:
        return wgan_gp_g_loss(d_mod, g_mod, z, y_prime)
    score, logits = _aux_logits(d_mod, _generator(g_mod)(z, y_prime))
    return -score.mean() + alpha_g * class_nll(logits, y_prime)


def acgan_d_loss(d, g, x_real, y_real, z, y_prime, alpha_d: float, cfg: TrainConfig,
                 rng: torch.Generator | None = None) -> torch.Tensor:
    """WGAN-GP critic loss plus ``alpha_d`` times the class NLL on real pairs.

    With ``alpha_d == 0`` the result is exactly :func:`wgan_gp_d_loss`.
    """
    if alpha_d < 0:
        raise ValidationError("alpha_d must be >= 0")
    g_mod, d_mod = _module(g), _module(d)
    n_classes = g_mod.spec.n_classes
    y_prime = check_labels(y_prime, n_classes, z.shape[0], name="y_prime")
    y_real = check_labels(y_real, n_classes, x_real.shape[0], name="y_real")
    loss = wgan_gp_d_loss(d_mod, g_mod, x_real, z, cfg, rng, y_fake=y_prime)
    if alpha_d == 0:
        return loss
    _, logits = _aux_logits(d_mod, x_real)
    return loss + alpha_d * class_nll(logits, y_real)


class AcGanLosses(WGANGPLosses):
    def __init__(self, alpha_g: float, alpha_d: float):
        self.alpha_g, self.alpha_d = alpha_g, alpha_d

    def d_loss(self, g_mod, d_mod, x, y, z, y_fake, cfg, rng):
        if self.alpha_d == 0:
            return super().d_loss(g_mod, d_mod, x, y, z, y_fake, cfg, rng)
        loss = wgan_gp_d_loss(d_mod, g_mod, x, z, cfg, rng, y_fake=y_fake)
        _, logits = _aux_logits(d_mod, x)
        return loss + self.alpha_d * class_nll(logits, y)

    def g_loss(self, g_mod, d_mod, z, y_fake):
        if self.alpha_g == 0:
            return super().g_loss(g_mod, d_mod, z, y_fake)
        score, logits = _aux_logits(d_mod, g_mod(z, y_fake))
        return -score.mean() + self.alpha_g * class_nll(logits, y_fake)


# -------------------------------------------------------- initialization

def _require_unconditional(g: ParamStore):
    if g.spec.role != "generator":
        raise ValidationError(f"expected a generator, got role={g.spec.role}")
    if g.spec.is_conditional:
        raise ValidationError("generator is already conditional")


def bnorm_sites(g: ParamStore) -> list[str]:
    """Names of the generator's batch-norm modules."""
    return [n[: -len(".weight")] for n in g.params
            if n.endswith(".weight") and n.rsplit(".", 2)[-2].startswith("bn")]


def condition_concat_init(uncond_g: ParamStore, n_classes: int, seed: int = 0) -> ParamStore:
    """Append a one-hot class input to the first layer; every other tensor is copied."""
    _require_unconditional(uncond_g)
    spec = uncond_g.spec.replace(conditioning="concat", n_classes=n_classes)
    spec.validate()
    w = uncond_g["fc.weight"]
    return uncond_g.replace(spec=spec, **{"fc.weight": surgery_expand_input(w, w.shape[1] + n_classes, seed)})


def condition_bnorm_init(uncond_g: ParamStore, n_classes: int) -> ParamStore:
    """Turn every batch-norm affine pair into a per-class bank initialized from it."""
    _require_unconditional(uncond_g)
    spec = uncond_g.spec.replace(conditioning="cond_bnorm", n_classes=n_classes)
    spec.validate()
    sites = bnorm_sites(uncond_g)
    if not sites:
        raise ValidationError("generator has no batch-normalization sites")
    params = OrderedDict((k, v.clone()) for k, v in uncond_g.params.items())
    for site in sites:
        for leaf in ("weight", "bias"):
            name = f"{site}.{leaf}"
            params[name] = params[name][None, :].repeat(n_classes, 1)
    return ParamStore(spec, params)


# ---------------------------------------------------------------- training

def check_class_coverage(data: DatasetHandle, n_classes: int) -> None:
    if not data.labeled:
        raise ValidationError(f"{data.dataset_id} is unlabeled; AC-GAN needs labels")
    labels = np.asarray(data.labels)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValidationError(f"labels must lie in [0, {n_classes}), found [{labels.min()}, {labels.max()}]")
    absent = sorted(set(range(n_classes)) - set(np.unique(labels).tolist()))
    if absent:
        raise ValidationError(f"classes absent from {data.dataset_id}: {absent}")


def acgan_specs(layout: ArchitectureSpec, cfg: AcGanConfig) -> tuple[ArchitectureSpec, ArchitectureSpec]:
    g_spec = layout.replace(role="generator", conditioning=cfg.conditioning, n_classes=cfg.n_classes)
    return g_spec, g_spec.replace(role="discriminator")


def init_acgan(cfg: AcGanConfig, init, layout: ArchitectureSpec | None = None):
    """Initial ``(g, d, provenance)`` for ``init = "scratch"`` or :class:`FromCheckpoint`.

    From a checkpoint, the generator is converted with the configured
    conditioning surgery, the discriminator trunk and score head are copied
    and its auxiliary class head starts fresh.
    """
    seed = cfg.base.seed
    if init == "scratch":
        if layout is None:
            raise ValidationError("training from scratch needs an architecture layout")
        tc = TransferConfig(Scratch(), Scratch(), cfg.base)
    elif isinstance(init, FromCheckpoint):
        g_init = Pretrained(init.generator)
        layout = layout or g_init.load().spec
        d_init = Scratch() if init.discriminator is None else Pretrained(init.discriminator)
        tc = TransferConfig(g_init, d_init, cfg.base)
    else:
        raise ValidationError("init must be 'scratch' or FromCheckpoint(...)")
    g_spec, d_spec = acgan_specs(layout, cfg)
    return apply_transfer(g_spec, tc, seed, d_spec=d_spec)


def train_acgan(cfg: AcGanConfig, init, data: DatasetHandle, hooks=(), layout: ArchitectureSpec | None = None,
                run_id: str = "acgan", log_path=None) -> TrainResult:
    """Train a conditional WGAN-GP with auxiliary classification terms.

    Generated labels are drawn uniformly over the classes. Per-class FID is
    logged by passing a hook from :func:`gantransfer.metrics.fid_hook` with
    ``per_class=True``.
    """
    check_class_coverage(data, cfg.n_classes)
    g, d, _ = init_acgan(cfg, init, layout)
    return run_adversarial(g, d, data, cfg.base, AcGanLosses(cfg.alpha_g, cfg.alpha_d), hooks, run_id, log_path)

