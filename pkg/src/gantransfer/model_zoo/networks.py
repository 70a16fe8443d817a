"""Torch modules realizing an :class:`ArchitectureSpec`."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .layers import ChannelLayerNorm, CondBatchNorm2d, DownBlock, UpBlock, he_uniform
from .spec import ArchitectureSpec


class Generator(nn.Module):
    """fc -> 4x4 map -> ``n_res_blocks`` upsampling blocks -> BN, ReLU, conv, tanh."""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        self.spec = spec
        w = spec.base_width
        bn_classes = spec.n_classes if spec.conditioning == "cond_bnorm" else 0
        in_dim = spec.noise_dim + (spec.n_classes if spec.conditioning == "concat" else 0)
        self.fc = nn.Linear(in_dim, 16 * w)
        self.blocks = nn.ModuleList(UpBlock(w, bn_classes) for _ in range(spec.n_res_blocks))
        self.bn_out = CondBatchNorm2d(w, bn_classes)
        self.conv_out = nn.Conv2d(w, spec.channels, 3, padding=1)

    def forward(self, z, y=None):
        spec = self.spec
        if spec.conditioning == "concat":
            z = torch.cat([z, F.one_hot(y, spec.n_classes).to(z.dtype)], dim=1)
        if spec.conditioning != "cond_bnorm":
            y = None
        h = self.fc(z).view(z.shape[0], spec.base_width, 4, 4)
        for block in self.blocks:
            h = block(h, y)
        return torch.tanh(self.conv_out(F.relu(self.bn_out(h, y))))


class _Trunk(nn.Module):
    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        w = spec.base_width
        self.conv_in = nn.Conv2d(spec.channels, w, 3, padding=1)
        self.blocks = nn.ModuleList(DownBlock(w) for _ in range(spec.n_res_blocks))
        self.ln_out = ChannelLayerNorm(w)

    def features(self, x):
        h = self.conv_in(x)
        for block in self.blocks:
            h = block(h)
        return F.relu(self.ln_out(h)).flatten(1)


class Discriminator(_Trunk):
    """Critic trunk with a linear score head and, for AC-GAN, a class head."""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__(spec)
        self.spec = spec
        self.head = nn.Linear(16 * spec.base_width, 1)
        self.has_aux = spec.role == "discriminator" and spec.is_conditional and spec.n_classes >= 2
        if self.has_aux:
            self.aux = nn.Linear(16 * spec.base_width, spec.n_classes)

    def forward(self, x):
        h = self.features(x)
        score = self.head(h).squeeze(1)
        logits = self.aux(h) if self.has_aux else None
        return score, logits


class Classifier(_Trunk):
    """Image classifier whose penultimate layer doubles as an embedding."""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__(spec)
        self.spec = spec
        self.feat = nn.Linear(16 * spec.base_width, spec.embed_dim)
        self.cls = nn.Linear(spec.embed_dim, spec.n_classes)

    def embed(self, x):
        return self.feat(self.features(x))

    def forward(self, x):
        return self.cls(F.relu(self.embed(x)))


def make_module(spec: ArchitectureSpec) -> nn.Module:
    if spec.role == "generator":
        return Generator(spec)
    if spec.role in ("discriminator", "critic"):
        return Discriminator(spec)
    return Classifier(spec)


def init_tensor(name: str, shape, generator: torch.Generator) -> torch.Tensor:
    """Initial value for one state entry, keyed by its name and shape.

    Conv/linear weights are He-uniform, biases zero, normalization scales one,
    running variances one and running means zero.
    """
    leaf = name.rsplit(".", 1)[-1]
    parent = name.rsplit(".", 2)[-2] if "." in name else ""
    is_norm = parent.startswith(("bn", "ln"))
    if leaf == "weight" and not is_norm:
        return he_uniform(shape, generator)
    if leaf == "weight" or leaf == "running_var":
        return torch.ones(shape)
    return torch.zeros(shape)


def initialize(module: nn.Module, seed: int) -> nn.Module:
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, tensor in module.state_dict(keep_vars=True).items():
            tensor.copy_(init_tensor(name, tensor.shape, gen))
    return module
