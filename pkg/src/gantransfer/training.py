"""GAN / WGAN-GP objectives and the alternating optimization loop."""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import torch

from .data import DatasetHandle
from .exceptions import TrainingDivergedError, ValidationError
from .model_zoo import ParamStore
from .validation import as_tensor, check_images

LOG_EPS = 1e-7
ITERATION_LOG_FIELDS = ("run_id", "iteration", "loss_d", "loss_g", "grad_norm_d", "wall_ms")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one adversarial run.

    Adam uses ``(beta1, beta2) = (0.0, 0.9)``, ``n_critic = 5`` critic steps
    per generator step and a gradient-penalty weight of 10 unless overridden.
    """

    batch_size: int = 64
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    iterations: int = 1000
    n_critic: int = 5
    gp_lambda: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2")
        if not self.lr > 0:
            raise ValidationError("lr must be positive")
        if self.n_critic < 1:
            raise ValidationError("n_critic must be >= 1")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")
        if self.gp_lambda < 0:
            raise ValidationError("gp_lambda must be >= 0")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def source(cls, **overrides) -> "TrainConfig":
        return cls(**{"batch_size": 128, "iterations": 50_000, **overrides})

    @classmethod
    def finetune(cls, target_size: int, **overrides) -> "TrainConfig":
        """Fine-tuning defaults: batch 64, lr 1e-4, or 1e-5 for targets of <= 1000 images."""
        lr = 1e-5 if target_size <= 1000 else 1e-4
        return cls(**{"batch_size": 64, "lr": lr, "iterations": 40_000, **overrides})


# ------------------------------------------------------------------ losses

def gan_loss(d_real_probs, d_fake_probs, eps: float = LOG_EPS) -> torch.Tensor:
    """Minimax value ``E[log D(x)] + E[log(1 - D(G(z)))]``; probabilities clamped to [eps, 1-eps]."""
    real = as_tensor(d_real_probs).clamp(eps, 1 - eps)
    fake = as_tensor(d_fake_probs).clamp(eps, 1 - eps)
    return torch.log(real).mean() + torch.log1p(-fake).mean()


def _critic(d) -> Callable:
    if isinstance(d, ParamStore):
        d = d.to_module(train=False)

    def score(x):
        out = d(x)
        return out[0] if isinstance(out, tuple) else out

    return score


def _generator(g) -> Callable:
    if isinstance(g, ParamStore):
        return g.to_module(train=False)
    return g


def interpolate(x_real, x_fake, generator: torch.Generator | None = None):
    """Per-sample convex combinations ``alpha * x_real + (1 - alpha) * x_fake``.

    Returns ``(x_hat, alpha)`` with one ``alpha ~ U(0, 1)`` per batch element.
    """
    if x_real.shape != x_fake.shape:
        raise ValidationError(f"real and fake batches differ in shape: {tuple(x_real.shape)} vs {tuple(x_fake.shape)}")
    alpha = torch.rand((x_real.shape[0],) + (1,) * (x_real.ndim - 1),
                       generator=generator, dtype=x_real.dtype)
    return alpha * x_real + (1 - alpha) * x_fake, alpha


def gradient_penalty(d, x_real, x_fake, lam: float = 10.0, rng: torch.Generator | None = None) -> torch.Tensor:
    """``lam * mean((||grad_x D(x_hat)||_2 - 1)^2)`` at random interpolates.

    The gradient is taken with respect to the interpolated input. The graph is
    kept so the penalty can be back-propagated into the critic parameters.
    """
    if lam < 0:
        raise ValidationError("gradient penalty weight must be >= 0")
    x_real, x_fake = as_tensor(x_real), as_tensor(x_fake)
    x_hat, _ = interpolate(x_real, x_fake.detach(), rng)
    if lam == 0:
        return x_hat.new_zeros(())
    x_hat = x_hat.detach().requires_grad_(True)
    scores = _critic(d)(x_hat)
    grad, = torch.autograd.grad(scores.sum(), x_hat, create_graph=True)
    norms = grad.flatten(1).norm(2, dim=1)
    return lam * ((norms - 1) ** 2).mean()


def wgan_gp_d_loss(d, g, x_real, z, cfg: TrainConfig, rng: torch.Generator | None = None,
                   y_fake=None, return_parts: bool = False):
    """Critic loss ``-E[D(x)] + E[D(G(z))] + gradient penalty``."""
    critic, gen = _critic(d), _generator(g)
    x_real = as_tensor(x_real)
    with torch.no_grad():
        x_fake = gen(z) if y_fake is None else gen(z, y_fake)
    if x_fake.shape != x_real.shape:
        raise ValidationError("generated and real batches differ in shape")
    real_term = -critic(x_real).mean()
    fake_term = critic(x_fake).mean()
    gp = gradient_penalty(critic, x_real, x_fake, cfg.gp_lambda, rng)
    loss = real_term + fake_term + gp
    if return_parts:
        return loss, {"real": real_term, "fake": fake_term, "gp": gp}
    return loss


def wgan_gp_g_loss(d, g, z, y_fake=None) -> torch.Tensor:
    """Generator loss ``-E[D(G(z))]``."""
    gen = _generator(g)
    x_fake = gen(z) if y_fake is None else gen(z, y_fake)
    return -_critic(d)(x_fake).mean()


# ------------------------------------------------------------- train loop

@dataclass
class Hook:
    """Callback ``fn(iteration, g_store, d_store)`` fired every ``every`` iterations.

    It also fires before the first update (iteration 0) when ``at_start`` is
    set, and always after the last one.
    """

    every: int
    fn: Callable
    at_start: bool = True

    def due(self, iteration: int, final: int) -> bool:
        if iteration == 0:
            return self.at_start
        return iteration % self.every == 0 or iteration == final


class TrainResult(NamedTuple):
    generator: ParamStore
    discriminator: ParamStore
    log: list


class _Streams:
    """Independent RNG streams so label sampling never perturbs z or alpha."""

    def __init__(self, seed: int):
        self.z = torch.Generator().manual_seed(int(seed))
        self.alpha = torch.Generator().manual_seed(int(seed) + 1)
        self.labels = torch.Generator().manual_seed(int(seed) + 2)


def _grad_norm(module) -> float:
    sq = 0.0
    for p in module.parameters():
        if p.grad is not None:
            sq += float(p.grad.detach().pow(2).sum())
    return math.sqrt(sq)


class WGANGPLosses:
    """Loss pair used by :func:`train_gan`; subclassed by the AC-GAN losses."""

    def d_loss(self, g_mod, d_mod, x, y, z, y_fake, cfg, rng):
        return wgan_gp_d_loss(d_mod, g_mod, x, z, cfg, rng, y_fake=y_fake)

    def g_loss(self, g_mod, d_mod, z, y_fake):
        return wgan_gp_g_loss(d_mod, g_mod, z, y_fake)


def run_adversarial(g: ParamStore, d: ParamStore, data: DatasetHandle, cfg: TrainConfig,
                    losses, hooks=(), run_id: str = "run", log_path=None) -> TrainResult:
    """Shared alternating loop: ``n_critic`` critic updates, then one generator update.

    Conditional generators get labels drawn uniformly from their own stream.
    Optimizer state always starts fresh.
    """
    if g.spec.image_size != d.spec.image_size or g.spec.channels != d.spec.channels:
        raise ValidationError("generator and discriminator disagree on image shape")
    if data.size == 0:
        raise ValidationError("training data is empty")
    check_images(data.images[:1], g.spec.channels, g.spec.image_size, name="data")

    g_mod, d_mod = g.to_module(train=True), d.to_module(train=True)
    opt_g = torch.optim.Adam(g_mod.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    opt_d = torch.optim.Adam(d_mod.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    streams = _Streams(cfg.seed)
    batches = data.batches(cfg.batch_size, cfg.seed)
    conditional = g.spec.is_conditional
    n_classes = g.spec.n_classes

    def sample_labels(b):
        if not conditional:
            return None
        return torch.randint(n_classes, (b,), generator=streams.labels)

    def fire(iteration):
        due = [h for h in hooks if h.due(iteration, cfg.iterations)]
        if due:
            g_snap = ParamStore.from_module(g_mod, g.spec)
            d_snap = ParamStore.from_module(d_mod, d.spec)
            for h in due:
                h.fn(iteration, g_snap, d_snap)

    writer, fh = None, None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        new = not log_path.exists()
        fh = open(log_path, "a", newline="")
        writer = csv.writer(fh)
        if new:
            writer.writerow(ITERATION_LOG_FIELDS)

    log = []
    try:
        fire(0)
        for it in range(1, cfg.iterations + 1):
            t0 = time.perf_counter()
            for _ in range(cfg.n_critic):
                xb, yb = next(batches)
                x = torch.from_numpy(xb)
                y = None if yb is None else torch.from_numpy(yb)
                z = torch.randn(x.shape[0], g.spec.noise_dim, generator=streams.z)
                loss_d = losses.d_loss(g_mod, d_mod, x, y, z, sample_labels(x.shape[0]), cfg, streams.alpha)
                opt_d.zero_grad(set_to_none=True)
                loss_d.backward()
                grad_norm_d = _grad_norm(d_mod)
                if not (math.isfinite(loss_d.item()) and math.isfinite(grad_norm_d)):
                    raise TrainingDivergedError(
                        f"non-finite critic loss at iteration {it}",
                        {"iteration": it, "loss_d": loss_d.item(), "loss_g": None,
                         "grad_norm_d": grad_norm_d})
                opt_d.step()

            for p in d_mod.parameters():
                p.requires_grad_(False)
            z = torch.randn(cfg.batch_size, g.spec.noise_dim, generator=streams.z)
            loss_g = losses.g_loss(g_mod, d_mod, z, sample_labels(cfg.batch_size))
            opt_g.zero_grad(set_to_none=True)
            loss_g.backward()
            for p in d_mod.parameters():
                p.requires_grad_(True)
            grad_norm_g = _grad_norm(g_mod)
            if not (math.isfinite(loss_g.item()) and math.isfinite(grad_norm_g)):
                raise TrainingDivergedError(
                    f"non-finite generator loss at iteration {it}",
                    {"iteration": it, "loss_d": loss_d.item(), "loss_g": loss_g.item(),
                     "grad_norm_d": grad_norm_d, "grad_norm_g": grad_norm_g})
            opt_g.step()

            row = {"run_id": run_id, "iteration": it, "loss_d": loss_d.item(), "loss_g": loss_g.item(),
                   "grad_norm_d": grad_norm_d, "wall_ms": round((time.perf_counter() - t0) * 1e3, 3)}
            log.append(row)
            if writer is not None:
                writer.writerow([row[k] for k in ITERATION_LOG_FIELDS])
            fire(it)
    finally:
        if fh is not None:
            fh.close()

    return TrainResult(ParamStore.from_module(g_mod, g.spec), ParamStore.from_module(d_mod, d.spec), log)


def train_gan(g: ParamStore, d: ParamStore, data: DatasetHandle, cfg: TrainConfig,
              hooks=(), run_id: str = "run", log_path=None) -> TrainResult:
    """Train with the WGAN-GP objective; deterministic given ``cfg.seed`` on one device."""
    return run_adversarial(g, d, data, cfg, WGANGPLosses(), hooks, run_id, log_path)


def sample_noise(n: int, noise_dim: int, seed: int) -> torch.Tensor:
    """Standard-normal noise from a dedicated, seeded generator."""
    return torch.randn(n, noise_dim, generator=torch.Generator().manual_seed(int(seed)))


def generate(g: ParamStore, n: int, seed: int, labels=None, batch_size: int = 1000) -> np.ndarray:
    """Draw ``n`` evaluation-mode samples as a float32 array."""
    z = sample_noise(n, g.spec.noise_dim, seed)
    module = g.to_module(train=False)
    if g.spec.is_conditional:
        if labels is None:
            gen = torch.Generator().manual_seed(int(seed) + 1)
            labels = torch.randint(g.spec.n_classes, (n,), generator=gen)
        labels = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    out = []
    with torch.no_grad():
        for lo in range(0, n, batch_size):
            y = None if labels is None or not g.spec.is_conditional else labels[lo:lo + batch_size]
            out.append(module(z[lo:lo + batch_size], y))
    return torch.cat(out).numpy()
