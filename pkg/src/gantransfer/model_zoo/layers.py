"""Building blocks for the ResNet generator/discriminator family."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


def he_uniform(shape, generator: torch.Generator | None = None, fan_in: int | None = None) -> torch.Tensor:
    """Sample a weight tensor from U(-a, a) with a = sqrt(6 / fan_in).

    ``fan_in`` defaults to the product of all but the leading dimension, which
    is the fan-in of both ``nn.Linear`` and ``nn.Conv2d`` weights.
    """
    shape = tuple(shape)
    if fan_in is None:
        fan_in = math.prod(shape[1:])
    bound = math.sqrt(6.0 / fan_in)
    u = torch.rand(shape, generator=generator, dtype=torch.float32)
    return (u * 2.0 - 1.0) * bound


class CondBatchNorm2d(nn.Module):
    """Batch normalization with optional per-class scale and shift.

    With ``n_classes == 0`` this is ordinary affine batch normalization. With
    ``n_classes >= 2`` the affine parameters become ``[n_classes, C]`` banks and
    ``forward`` selects one row per sample. Running statistics are shared by
    all classes.
    """

    def __init__(self, num_features: int, n_classes: int = 0, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.num_features = num_features
        self.n_classes = n_classes
        self.momentum = momentum
        self.eps = eps
        shape = (n_classes, num_features) if n_classes else (num_features,)
        self.weight = nn.Parameter(torch.ones(shape))
        self.bias = nn.Parameter(torch.zeros(shape))
        self.register_buffer("running_mean", torch.zeros(num_features))
        self.register_buffer("running_var", torch.ones(num_features))

    def forward(self, x, y=None):
        h = F.batch_norm(x, self.running_mean, self.running_var, None, None,
                         self.training, self.momentum, self.eps)
        if self.n_classes:
            if y is None:
                raise ValueError("class-conditional batch norm needs labels")
            w, b = self.weight[y], self.bias[y]
        else:
            w, b = self.weight.expand(x.shape[0], -1), self.bias.expand(x.shape[0], -1)
        return h * w[:, :, None, None] + b[:, :, None, None]


class ChannelLayerNorm(nn.Module):
    """Layer normalization over (C, H, W) with a per-channel affine map."""

    def __init__(self, num_features: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(num_features))
        self.bias = nn.Parameter(torch.zeros(num_features))

    def forward(self, x):
        h = F.layer_norm(x, x.shape[1:], eps=self.eps)
        return h * self.weight[None, :, None, None] + self.bias[None, :, None, None]


class UpBlock(nn.Module):
    def __init__(self, width: int, n_classes: int = 0):
        super().__init__()
        self.bn1 = CondBatchNorm2d(width, n_classes)
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.bn2 = CondBatchNorm2d(width, n_classes)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.shortcut = nn.Conv2d(width, width, 1)

    def forward(self, x, y=None):
        h = F.interpolate(F.relu(self.bn1(x, y)), scale_factor=2, mode="nearest")
        h = self.conv1(h)
        h = self.conv2(F.relu(self.bn2(h, y)))
        return h + self.shortcut(F.interpolate(x, scale_factor=2, mode="nearest"))


class DownBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.ln1 = ChannelLayerNorm(width)
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.ln2 = ChannelLayerNorm(width)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.shortcut = nn.Conv2d(width, width, 1)

    def forward(self, x):
        h = self.conv1(F.relu(self.ln1(x)))
        h = self.conv2(F.relu(self.ln2(h)))
        return F.avg_pool2d(h, 2) + self.shortcut(F.avg_pool2d(x, 2))
