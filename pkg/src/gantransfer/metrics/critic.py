"""Independent Wasserstein (IW) critic.

The critic is trained only for evaluation, with the WGAN-GP objective, to
push its scores on ``x_other`` above its scores on ``x_val``. The reported
value ``IW(x1, x2) = E[D(x1)] - E[D(x2)]`` with ``x1`` a validation set and
``x2`` generated samples is therefore a negated Wasserstein estimate: closer
to zero means closer distributions.
"""

from __future__ import annotations

import numpy as np
import torch

from ..data import DatasetHandle
from ..exceptions import ValidationError
from ..model_zoo import ArchitectureSpec, ParamStore, build_network
from ..training import TrainConfig, gradient_penalty
from ..validation import check_images


def _as_images(x, name, keep_float64: bool = False) -> np.ndarray:
    if isinstance(x, DatasetHandle):
        x = x.images
    if isinstance(x, torch.Tensor):
        x = x.detach().numpy()
    x = np.asarray(x)
    x = x.astype(np.float64 if keep_float64 and x.dtype == np.float64 else np.float32, copy=False)
    if x.ndim != 4 or x.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty image set [N, C, S, S]")
    return x


def critic_spec_for(spec: ArchitectureSpec) -> ArchitectureSpec:
    """The critic mirrors the evaluated run's discriminator, minus any class head."""
    return spec.replace(role="critic", conditioning="none", n_classes=0)


def train_iw_critic(x_val, x_other, cfg: TrainConfig, spec: ArchitectureSpec) -> ParamStore:
    """Train a fresh critic on ``x_val`` vs ``x_other``; the returned store is frozen.

    ``x_val`` must never have been seen by the model under evaluation.
    """
    x_val, x_other = _as_images(x_val, "x_val"), _as_images(x_other, "x_other")
    spec = critic_spec_for(spec)
    check_images(x_val[:1], spec.channels, spec.image_size, "x_val")
    check_images(x_other[:1], spec.channels, spec.image_size, "x_other")
    module = build_network(spec, cfg.seed).to_module(train=True)
    opt = torch.optim.Adam(module.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    rng = np.random.default_rng([cfg.seed, 31337])
    alpha_gen = torch.Generator().manual_seed(cfg.seed)
    b = cfg.batch_size
    for _ in range(cfg.iterations):
        xv = torch.from_numpy(x_val[rng.integers(len(x_val), size=b)])
        xo = torch.from_numpy(x_other[rng.integers(len(x_other), size=b)])
        score = lambda x: module(x)[0]  # noqa: E731
        loss = score(xv).mean() - score(xo).mean() + gradient_penalty(score, xo, xv, cfg.gp_lambda, alpha_gen)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
    return ParamStore.from_module(module.eval(), spec)


def _scores(critic, x, batch_size=1000) -> np.ndarray:
    if isinstance(critic, ParamStore):
        module = critic.to_module(train=False)
        fn = lambda b: module(b.float())[0]  # noqa: E731
    else:
        fn = critic
    out = []
    with torch.no_grad():
        for lo in range(0, len(x), batch_size):
            out.append(torch.as_tensor(fn(torch.as_tensor(x[lo:lo + batch_size]))).double().reshape(-1))
    return torch.cat(out).numpy()


def iw(critic, x1, x2) -> float:
    """Signed score gap ``mean D(x1) - mean D(x2)``.

    ``critic`` is a critic ParamStore or any callable mapping a batch to scores.
    """
    x1, x2 = _as_images(x1, "x1", True), _as_images(x2, "x2", True)
    return float(_scores(critic, x1).mean() - _scores(critic, x2).mean())


def independent_wasserstein(x_val, x_gen, cfg: TrainConfig, spec: ArchitectureSpec,
                            holdout: float = 0.5) -> dict:
    """Train on one part of each set and report IW on the held-out remainder."""
    x_val, x_gen = _as_images(x_val, "x_val"), _as_images(x_gen, "x_gen")
    rng = np.random.default_rng([cfg.seed, 271828])
    pv, pg = rng.permutation(len(x_val)), rng.permutation(len(x_gen))
    kv, kg = int(len(x_val) * (1 - holdout)), int(len(x_gen) * (1 - holdout))
    if min(kv, kg, len(x_val) - kv, len(x_gen) - kg) < 1:
        raise ValidationError("sets too small to hold out evaluation samples")
    critic = train_iw_critic(x_val[pv[:kv]], x_gen[pg[:kg]], cfg, spec)
    value = iw(critic, x_val[pv[kv:]], x_gen[pg[kg:]])
    return {"iw": value, "critic": critic, "n_train": (kv, kg), "n_eval": (len(x_val) - kv, len(x_gen) - kg)}
