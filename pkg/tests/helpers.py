"""Shared numerical helpers for the test-suite."""

import numpy as np
import torch

from gantransfer.model_zoo import ArchitectureSpec, build_network
from gantransfer.training import TrainConfig, wgan_gp_d_loss, wgan_gp_g_loss

# 8x8, one residual block, width 4: about 1 000 generator and 500 critic parameters.
GRADCHECK_SPEC = ArchitectureSpec(image_size=8, n_res_blocks=1, base_width=4, noise_dim=8)

# PASS/FAIL lines of the acceptance criteria, repeated in the terminal summary.
CRITERIA_LINES: list[str] = []


def finite_difference_errors(loss_fn, module, n_coords=50, seed=0, h=1e-6):
    """Relative errors between autograd and central differences at random coordinates.

    ``loss_fn()`` must be deterministic (re-seed any randomness inside it).
    """
    params = [p for p in module.parameters() if p.requires_grad]
    module.zero_grad(set_to_none=True)
    loss_fn().backward()
    grads = [p.grad.detach().clone() for p in params]
    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    flat = rng.choice(sizes.sum(), size=n_coords, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    errors = []

    def at(p, i, value):
        with torch.no_grad():
            p[i] = value
        return loss_fn().item()

    for f in flat:
        k = int(np.searchsorted(offsets, f, side="right") - 1)
        i = int(f - offsets[k])
        p = params[k].view(-1)
        orig = p[i].item()
        up, down = at(p, i, orig + h), at(p, i, orig - h)
        at(p, i, orig)
        numeric = (up - down) / (2 * h)
        analytic = grads[k].view(-1)[i].item()
        scale = max(abs(analytic), abs(numeric))
        errors.append(0.0 if scale < 1e-9 else abs(analytic - numeric) / scale)
    return np.array(errors)


def wgan_gp_gradcheck(seed=0, n_coords=50):
    """Max relative gradient errors ``(d_loss, g_loss)`` on the tiny float64 networks."""
    g = build_network(GRADCHECK_SPEC, seed).to_module(train=True).double()
    d = build_network(GRADCHECK_SPEC.replace(role="discriminator"), seed + 1).to_module(train=True).double()
    gen = torch.Generator().manual_seed(seed)
    x = (torch.rand(6, 3, 8, 8, generator=gen, dtype=torch.float64) * 2 - 1)
    z = torch.randn(6, GRADCHECK_SPEC.noise_dim, generator=gen, dtype=torch.float64)
    cfg = TrainConfig()

    def d_loss():
        return wgan_gp_d_loss(d, g, x, z, cfg, torch.Generator().manual_seed(seed + 7))

    def g_loss():
        return wgan_gp_g_loss(d, g, z)

    return (finite_difference_errors(d_loss, d, n_coords, seed),
            finite_difference_errors(g_loss, g, n_coords, seed + 1))
