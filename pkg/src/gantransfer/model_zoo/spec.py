"""Declarative network descriptions."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..exceptions import ValidationError

ROLES = ("generator", "discriminator", "critic", "classifier", "embedder")
CONDITIONING = ("none", "concat", "cond_bnorm")

# Fields ignored by the layout-compatibility predicate.
_COMPAT_IGNORED = ("conditioning", "n_classes")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Shape-defining description of one network.

    ``image_size`` must equal ``4 * 2 ** n_res_blocks``: every residual block
    doubles (generator) or halves (discriminator side) the resolution around
    a 4x4 bottleneck. ``embed_dim`` only affects the classifier and embedder
    roles, where it is the width of the penultimate layer.
    """

    role: str = "generator"
    image_size: int = 32
    channels: int = 3
    base_width: int = 64
    n_res_blocks: int = 3
    noise_dim: int = 128
    n_classes: int = 0
    conditioning: str = "none"
    norm_g: str = "batch"
    norm_d: str = "layer"
    embed_dim: int = 64

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.role not in ROLES:
            raise ValidationError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if self.conditioning not in CONDITIONING:
            raise ValidationError(f"unknown conditioning {self.conditioning!r}")
        if self.norm_g != "batch":
            raise ValidationError("norm_g must be 'batch'")
        if self.norm_d != "layer":
            raise ValidationError("norm_d must be 'layer'")
        for name in ("image_size", "channels", "base_width", "noise_dim", "embed_dim"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.n_res_blocks < 0 or self.n_classes < 0:
            raise ValidationError("n_res_blocks and n_classes must be non-negative")
        if self.image_size != 4 * 2 ** self.n_res_blocks:
            raise ValidationError(
                f"image_size={self.image_size} is incompatible with n_res_blocks="
                f"{self.n_res_blocks} (expected {4 * 2 ** self.n_res_blocks})")
        if self.conditioning != "none" and self.n_classes < 2:
            raise ValidationError("conditional networks need n_classes >= 2")
        if self.role in ("classifier", "embedder"):
            if self.n_classes < 2:
                raise ValidationError(f"{self.role} networks need n_classes >= 2")
            if self.conditioning != "none":
                raise ValidationError(f"{self.role} networks cannot be conditional")
        if self.role == "critic" and self.conditioning != "none":
            raise ValidationError("critics are unconditional")

    @property
    def is_conditional(self) -> bool:
        return self.conditioning != "none"

    def replace(self, **changes) -> "ArchitectureSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown ArchitectureSpec fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def preset(cls, name: str, role: str = "generator", **overrides) -> "ArchitectureSpec":
        try:
            base = PRESETS[name]
        except KeyError:
            raise ValidationError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
        return cls(role=role, **{**base, **overrides})


def layout_compatible(a: ArchitectureSpec, b: ArchitectureSpec) -> bool:
    """True iff ``a`` and ``b`` agree on every field except conditioning and n_classes."""
    da, db = a.to_dict(), b.to_dict()
    return all(da[k] == db[k] for k in da if k not in _COMPAT_IGNORED)


PRESETS = {
    # Four residual blocks at 64x64, as in the WGAN-GP ResNet family.
    "paper64": dict(image_size=64, n_res_blocks=4, base_width=64),
    # The AC-GAN experiments reuse the same family.
    "resnet18": dict(image_size=64, n_res_blocks=4, base_width=64),
    "half64": dict(image_size=64, n_res_blocks=4, base_width=32),
    "desk32": dict(image_size=32, n_res_blocks=3, base_width=64),
    "desk8": dict(image_size=8, n_res_blocks=1, base_width=32),
}
