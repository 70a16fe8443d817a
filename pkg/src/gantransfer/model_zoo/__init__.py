"""Network architectures, parameter stores and checkpoint files."""

from .checkpoint import FORMAT_VERSION, Checkpoint, load_checkpoint, save_checkpoint
from .networks import Classifier, Discriminator, Generator, init_tensor, make_module
from .spec import PRESETS, ArchitectureSpec, layout_compatible
from .store import (ParamStore, build_network, forward_discriminator, forward_generator,
                    param_count, param_manifest)

__all__ = [
    "ArchitectureSpec", "PRESETS", "layout_compatible",
    "ParamStore", "build_network", "forward_generator", "forward_discriminator",
    "param_manifest", "param_count",
    "Checkpoint", "save_checkpoint", "load_checkpoint", "FORMAT_VERSION",
    "Generator", "Discriminator", "Classifier", "make_module", "init_tensor",
]
