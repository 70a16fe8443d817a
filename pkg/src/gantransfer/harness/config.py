"""Experiment configuration files.

The format is line-oriented ``key = value`` with ``[section]`` headers.
Keys are lower_snake_case; a key the section does not define is an error.
Example::

    [experiment]
    kind = transfer_grid
    seeds = 0, 1, 2

    [architecture]
    preset = desk8
    base_width = 32

    [data]
    source = synthetic:shapes_a:5000:100
    target = synthetic:shapes_b:1000:1
    reference = synthetic:shapes_b:5000:2
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..exceptions import ValidationError
from ..model_zoo import ArchitectureSpec
from ..training import TrainConfig

KINDS = ("train_source", "transfer_grid", "size_sweep", "source_target_matrix", "acgan",
         "select_source", "classifier_eval")
CELL_NAMES = {"scratch/scratch": (False, False), "scratch/pre": (False, True),
              "pre/scratch": (True, False), "pre/pre": (True, True)}
_KEY = re.compile(r"^[a-z][a-z0-9_]*$")

_TRAIN_KEYS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_ARCH_KEYS = {f.name for f in dataclasses.fields(ArchitectureSpec)} - {"role", "conditioning", "n_classes"}


def _ints(v: str) -> list[int]:
    return [int(x) for x in v.replace(",", " ").split()]


def _words(v: str) -> list[str]:
    return [x.strip() for x in v.split(",") if x.strip()]


SCHEMA = {
    "experiment": {"kind": str, "name": str, "seeds": _ints, "output_dir": str},
    "architecture": {"preset": str, **{k: int for k in _ARCH_KEYS if k not in ("norm_g", "norm_d")}},
    "data": {"source": str, "target": str, "reference": str, "sources": _words, "targets": _words,
             "source_generator": str, "source_discriminator": str, "zoo": str, "generator": str},
    "source_training": {**{k: None for k in _TRAIN_KEYS}},
    "finetune": {**{k: None for k in _TRAIN_KEYS}},
    "grid": {"cells": _words},
    "sweep": {"sizes": _ints},
    "acgan": {"conditioning": str, "alpha_g": float, "alpha_d": float, "inits": _words},
    "eval": {"every": int, "n_samples": int, "sample_seed": int, "iw_iterations": int, "iw_batch_size": int,
             "smoothing_window": int},
    "embedder": {"data": str, "seed": int, "iterations": int, "embed_dim": int, "base_width": int},
    "classifier": {"data": str, "seed": int, "iterations": int, "n_per_class": int},
    "selection": {"n_samples": int},
}


def _train_value(key, raw):
    return float(raw) if key in ("lr", "beta1", "beta2", "gp_lambda") else int(raw)


@dataclass(frozen=True)
class ExperimentSpec:
    """A fully resolved, serializable experiment description."""

    kind: str
    name: str = "experiment"
    seeds: tuple = (0,)
    output_dir: str = "out"
    architecture: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    source_training: dict = field(default_factory=dict)
    finetune: dict = field(default_factory=dict)
    grid: tuple = ("scratch/scratch", "scratch/pre", "pre/scratch", "pre/pre")
    sizes: tuple = (100, 1000, 5000)
    acgan: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    embedder: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)
    selection: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not self.seeds:
            raise ValidationError("at least one seed is required")
        for cell in self.grid:
            if cell not in CELL_NAMES:
                raise ValidationError(f"unknown grid cell {cell!r}; expected one of {sorted(CELL_NAMES)}")
        if any(n < 1 for n in self.sizes):
            raise ValidationError("sweep sizes must be positive")
        self.arch_spec()
        self.source_cfg()
        self.finetune_cfg(1000)

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    # -- resolved objects

    def arch_spec(self) -> ArchitectureSpec:
        arch = dict(self.architecture)
        preset = arch.pop("preset", "desk8")
        return ArchitectureSpec.preset(preset, **arch)

    def source_cfg(self) -> TrainConfig:
        return TrainConfig.source(**self.source_training)

    def finetune_cfg(self, target_size: int) -> TrainConfig:
        return TrainConfig.finetune(target_size, **self.finetune)

    # -- serialization

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"], d["grid"], d["sizes"] = list(self.seeds), list(self.grid), list(self.sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        for k in ("seeds", "grid", "sizes"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def digest(self) -> str:
        """Hash of everything that determines results (seeds and output_dir excluded)."""
        d = self.to_dict()
        for k in ("seeds", "output_dir"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def run_id(self, seed: int) -> str:
        return hashlib.sha256(f"{self.digest()}:{int(seed)}".encode()).hexdigest()[:16]


def parse_config(text: str, source: str = "<config>") -> ExperimentSpec:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), strict=True)
    parser.optionxform = str  # keep case so that non-snake keys are reported, not folded
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ValidationError(f"{source}: {exc}") from exc
    values: dict = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ValidationError(f"{source}: unknown section [{section}]; expected one of {sorted(SCHEMA)}")
        schema = SCHEMA[section]
        for key, raw in parser.items(section):
            if not _KEY.match(key):
                raise ValidationError(f"{source}: key {key!r} in [{section}] is not lower_snake_case")
            if key not in schema:
                raise ValidationError(f"{source}: unknown key {key!r} in [{section}]; expected one of {sorted(schema)}")
            conv = schema[key]
            try:
                value = _train_value(key, raw) if conv is None else conv(raw)
            except ValueError as exc:
                raise ValidationError(f"{source}: bad value for [{section}] {key}: {raw!r}") from exc
            values.setdefault(section, {})[key] = value

    exp = values.get("experiment", {})
    if "kind" not in exp:
        raise ValidationError(f"{source}: [experiment] kind is required")
    kw = {k: v for k, v in exp.items()}
    if "seeds" in kw:
        kw["seeds"] = tuple(kw["seeds"])
    for section in ("architecture", "data", "source_training", "finetune", "acgan", "eval", "embedder",
                    "classifier", "selection"):
        if section in values:
            kw[section] = values[section]
    if "grid" in values:
        kw["grid"] = tuple(values["grid"].get("cells", ()))
    if "sweep" in values:
        kw["sizes"] = tuple(values["sweep"].get("sizes", ()))
    return ExperimentSpec(**kw)


def load_config(path) -> ExperimentSpec:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file {path} does not exist")
    return parse_config(path.read_text(), str(path))


def dump_config(spec: ExperimentSpec) -> str:
    """Inverse of :func:`parse_config` (up to comments and key order)."""
    out = ["[experiment]", f"kind = {spec.kind}", f"name = {spec.name}",
           f"seeds = {', '.join(map(str, spec.seeds))}", f"output_dir = {spec.output_dir}"]

    def section(name, d, fmt=str):
        if d:
            out.append("")
            out.append(f"[{name}]")
            for k, v in d.items():
                out.append(f"{k} = {', '.join(map(str, v)) if isinstance(v, (list, tuple)) else fmt(v)}")

    for name in ("architecture", "data", "source_training", "finetune", "acgan", "eval", "embedder",
                 "classifier", "selection"):
        section(name, getattr(spec, name), repr if name in ("source_training", "finetune") else str)
    section("grid", {"cells": spec.grid})
    section("sweep", {"sizes": spec.sizes})
    return "\n".join(out) + "\n"
