"""Containers shared by training, inspection and checkpointing."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import torch

from .discriminator import TextureDiscriminator
from .exceptions import ParameterError
from .generator import GeneratorNet


@dataclass
class TrainConfig:
    """Training hyper-parameters. Every field can be set from a config file or CLI flag."""

    iterations: int = 2000
    lr_g: float = 5e-4
    lr_d: float = 5e-4
    recon_weight: float = 10.0
    recon_reduction: str = "sum"
    d_steps: int = 3
    g_steps: int = 3
    seed: int = 0
    scale_factor: float = 0.75
    min_dim: int = 24
    n_scales: Optional[int] = None
    width: int = 32
    branch_width: int = 8
    shared_branches: bool = False
    texture_module: bool = True
    d_eval_stats: str = "image"
    deterministic: bool = True
    image_size: int = 256

    def validate(self) -> "TrainConfig":
        if self.iterations < 0:
            raise ParameterError("iterations must be >= 0")
        for name in ("lr_g", "lr_d", "width", "branch_width", "d_steps", "g_steps", "image_size"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.recon_weight < 0:
            raise ParameterError("recon_weight must be >= 0")
        if not 0.0 < self.scale_factor < 1.0:
            raise ParameterError("scale_factor must lie in (0, 1)")
        if self.min_dim < 4:
            raise ParameterError("min_dim must be >= 4")
        if self.recon_reduction not in ("sum", "mean"):
            raise ParameterError("recon_reduction must be 'sum' or 'mean'")
        if self.d_eval_stats not in ("image", "running"):
            raise ParameterError("d_eval_stats must be 'image' or 'running'")
        if self.n_scales is not None and self.n_scales < 1:
            raise ParameterError("n_scales must be >= 1")
        return self

    @classmethod
    def from_mapping(cls, values: Dict[str, object]) -> "TrainConfig":
        """Build from string or typed values, coercing to each field's type."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ParameterError(f"unknown config key {key!r}")
            default = getattr(cls(), key)
            kwargs[key] = _coerce(raw, default, key)
        return cls(**kwargs).validate()

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def _coerce(raw, default, key):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key == "n_scales":
        return None if text.lower() in ("", "none", "auto") else int(text)
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return type(default)(text)
    except ValueError as exc:
        raise ParameterError(f"{key}: cannot parse {raw!r}") from exc


@dataclass
class ScaleModel:
    """Generator, discriminator and noise amplitude for one pyramid level."""

    index: int
    size: Tuple[int, int]
    generator: GeneratorNet
    discriminator: TextureDiscriminator
    sigma: float = 1.0

    def freeze(self) -> "ScaleModel":
        for net in (self.generator, self.discriminator):
            net.eval()
            net.requires_grad_(False)
        return self


def build_scale_model(index: int, size, channels: int, config: TrainConfig) -> ScaleModel:
    gen = GeneratorNet(channels, config.width, scale_index=index)
    disc = TextureDiscriminator(
        channels,
        config.width,
        config.branch_width,
        scale_index=index,
        shared_branches=config.shared_branches,
        texture_module=config.texture_module,
        eval_stats=config.d_eval_stats,
    )
    return ScaleModel(index=index, size=tuple(size), generator=gen, discriminator=disc)


@dataclass
class TrainedStack:
    """A trained pyramid. ``models`` run coarse to fine; ``sizes`` run fine to coarse."""

    models: List[ScaleModel]
    zstar: torch.Tensor
    sizes: List[Tuple[int, int]]
    config: TrainConfig
    channels: int
    log: List[dict] = field(default_factory=list)

    @property
    def n_scales(self) -> int:
        return len(self.sizes)

    def model_at(self, n: int) -> ScaleModel:
        """Model for pyramid level ``n`` (0 = finest)."""
        for m in self.models:
            if m.index == n:
                return m
        raise KeyError(n)
