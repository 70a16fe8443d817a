"""Parameter stores and the forward passes that consume them."""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import torch
from torch import nn

from ..exceptions import ValidationError
from ..validation import check_images, check_labels, check_noise
from .networks import initialize, make_module
from .spec import ArchitectureSpec


@lru_cache(maxsize=256)
def param_manifest(spec: ArchitectureSpec) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Ordered ``(name, shape)`` pairs of every state entry the spec implies."""
    with torch.device("meta"):
        module = make_module(spec)
    return tuple((name, tuple(t.shape)) for name, t in module.state_dict().items())


def param_count(spec: ArchitectureSpec, trainable_only: bool = True) -> int:
    """Number of scalars in the manifest (running statistics excluded by default)."""
    total = 0
    for name, shape in param_manifest(spec):
        if trainable_only and name.endswith(("running_mean", "running_var")):
            continue
        total += int(np.prod(shape, dtype=np.int64))
    return total


@dataclass(eq=False)
class ParamStore:
    """Named float32 tensors for one network plus the spec that shapes them.

    Treat a store as immutable: training works on module copies and produces
    new stores. ``checksum`` hashes names, shapes and raw bytes in
    lexicographic name order, so it changes iff any parameter bit changes.
    """

    spec: ArchitectureSpec
    params: OrderedDict = field(default_factory=OrderedDict)

    def __post_init__(self):
        manifest = param_manifest(self.spec)
        names = [n for n, _ in manifest]
        if set(names) != set(self.params):
            missing = sorted(set(names) - set(self.params))
            extra = sorted(set(self.params) - set(names))
            raise ValidationError(f"parameter names do not match spec (missing={missing[:3]}, extra={extra[:3]})")
        ordered = OrderedDict()
        for name, shape in manifest:
            t = self.params[name]
            if tuple(t.shape) != shape:
                raise ValidationError(f"parameter {name} has shape {tuple(t.shape)}, spec implies {shape}")
            ordered[name] = t.detach().to(torch.float32).contiguous()
        self.params = ordered

    @property
    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            t = self.params[name]
            h.update(name.encode())
            h.update(repr(tuple(t.shape)).encode())
            h.update(t.numpy().astype("<f4", copy=False).tobytes())
        return h.hexdigest()

    def __getitem__(self, name):
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def n_parameters(self) -> int:
        return param_count(self.spec)

    def replace(self, spec: ArchitectureSpec | None = None, **updates) -> "ParamStore":
        """Copy with some tensors swapped (and optionally a different spec)."""
        params = OrderedDict((k, v.clone()) for k, v in self.params.items())
        params.update(updates)
        return ParamStore(spec or self.spec, params)

    @classmethod
    def from_module(cls, module: nn.Module, spec: ArchitectureSpec | None = None) -> "ParamStore":
        spec = spec or module.spec
        state = OrderedDict((k, v.detach().clone().float()) for k, v in module.state_dict().items())
        return cls(spec, state)

    def to_module(self, train: bool = False) -> nn.Module:
        module = make_module(self.spec)
        module.load_state_dict(self.params, strict=True)
        module.train(train)
        return module


def build_network(spec: ArchitectureSpec, seed: int) -> ParamStore:
    """Freshly initialized parameters, deterministic in ``(spec, seed)``."""
    if not isinstance(spec, ArchitectureSpec):
        raise ValidationError("spec must be an ArchitectureSpec")
    spec.validate()
    return ParamStore.from_module(initialize(make_module(spec), seed), spec)


def forward_generator(g: ParamStore, z, y=None) -> torch.Tensor:
    """Generate a ``[B, C, S, S]`` batch in [-1, 1] using evaluation-mode statistics."""
    spec = g.spec
    if spec.role != "generator":
        raise ValidationError(f"expected a generator, got role={spec.role}")
    z = check_noise(z, spec.noise_dim)
    if spec.is_conditional:
        if y is None:
            raise ValidationError("conditional generator requires labels y")
        y = check_labels(y, spec.n_classes, z.shape[0])
    elif y is not None:
        raise ValidationError("unconditional generator does not take labels")
    module = g.to_module(train=False)
    with torch.no_grad():
        return module(z, y)


def forward_discriminator(d: ParamStore, x):
    """Return ``(scores [B], class_logits [B, K] or None)``."""
    spec = d.spec
    if spec.role not in ("discriminator", "critic"):
        raise ValidationError(f"expected a discriminator or critic, got role={spec.role}")
    x = check_images(x, spec.channels, spec.image_size)
    module = d.to_module(train=False)
    with torch.no_grad():
        return module(x)
