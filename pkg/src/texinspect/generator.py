"""Per-scale residual generators and the coarse-to-fine generation cascade.

At scale ``n`` the generator sees the upsampled output of scale ``n + 1``
plus scaled noise and predicts a residual::

    out_n = up(out_{n+1}) + psi_n(sigma_n * z_n + up(out_{n+1}))

At the coarsest scale ``up(out_{n+1})`` is an all-zero image.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import ParameterError
from .imaging import resample
from .validation import check_min_size

N_BLOCKS = 5
# five stacked 3x3 convolutions
RECEPTIVE_FIELD = 1 + 2 * N_BLOCKS


class ImageStatsBatchNorm(nn.BatchNorm2d):
    """BatchNorm that, in eval mode, can normalise with the input's own statistics.

    Running statistics collected during training average over differently
    distributed batches (real vs generated images, random vs reconstruction
    noise) and match none of them at inference. With ``eval_stats="image"`` an
    eval-mode forward normalises with its own input's statistics, exactly as
    in training, without touching the running buffers.
    """

    def __init__(self, num_features: int, eval_stats: str = "image"):
        super().__init__(num_features)
        if eval_stats not in ("image", "running"):
            raise ParameterError(f"eval_stats must be 'image' or 'running', got {eval_stats!r}")
        self.eval_stats = eval_stats

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.training or self.eval_stats == "running":
            return super().forward(x)
        return F.batch_norm(x, None, None, self.weight, self.bias, True, 0.0, self.eps)


def conv_block(in_ch: int, out_ch: int, act: nn.Module, eval_stats: str = "image") -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1),
        ImageStatsBatchNorm(out_ch, eval_stats),
        act,
    )


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    if isinstance(module, nn.Conv2d):
        nn.init.normal_(module.weight, 0.0, std)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


class GeneratorNet(nn.Module):
    """The residual net: 4 x (conv3x3, BN, LeakyReLU) then conv3x3 + tanh."""

    def __init__(self, channels: int = 3, width: int = 32, scale_index: int = 0):
        super().__init__()
        self.channels = channels
        self.width = width
        self.scale_index = scale_index
        blocks = [conv_block(channels, width, nn.LeakyReLU(0.2))]
        blocks += [conv_block(width, width, nn.LeakyReLU(0.2)) for _ in range(N_BLOCKS - 2)]
        blocks.append(nn.Sequential(nn.Conv2d(width, channels, kernel_size=3, padding=1), nn.Tanh()))
        self.body = nn.Sequential(*blocks)
        self.apply(init_weights)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


def _batched(x: torch.Tensor) -> torch.Tensor:
    return x.unsqueeze(0) if x.ndim == 3 else x


def apply_generator_net(net: GeneratorNet, image: torch.Tensor) -> torch.Tensor:
    """Run the residual net; output has the input's shape and lies in [-1, 1]."""
    x = _batched(image)
    check_min_size(x.shape[-2], x.shape[-1], RECEPTIVE_FIELD, "generator")
    out = net(x)
    return out if image.ndim == 4 else out.squeeze(0)


def generate_at_scale(model, noise: torch.Tensor, coarser: Optional[torch.Tensor]) -> torch.Tensor:
    """One step of the cascade for ``model`` (a :class:`~texinspect.training.ScaleModel`).

    ``coarser`` is the previous (coarser) output, or ``None`` at the
    coarsest scale where the prior is all zeros. ``noise`` must match the
    scale's size; it is multiplied by the model's noise amplitude.
    """
    h, w = model.size
    noise = _batched(noise)
    if tuple(noise.shape[-2:]) != (h, w) or noise.shape[-3] != model.generator.channels:
        raise ParameterError(
            f"noise shape {tuple(noise.shape[-3:])} does not match scale size "
            f"{(model.generator.channels, h, w)}"
        )
    if coarser is None:
        prior = torch.zeros_like(noise)
    else:
        prior = resample(_batched(coarser), h, w)
    residual = apply_generator_net(model.generator, model.sigma * noise + prior)
    return (prior + residual).clamp(-1.0, 1.0)


def draw_noise(models: Sequence, generator: torch.Generator, batch: int = 1) -> List[torch.Tensor]:
    return [
        torch.randn((batch, m.generator.channels, *m.size), generator=generator)
        for m in models
    ]


def cascade(models: Sequence, noises: Sequence[torch.Tensor]) -> List[torch.Tensor]:
    """Run ``generate_at_scale`` coarse to fine with explicit per-scale noise."""
    outputs: List[torch.Tensor] = []
    prev = None
    for model, z in zip(models, noises):
        prev = generate_at_scale(model, z, prev)
        outputs.append(prev)
    return outputs


def generate_full_stack(models: Sequence, seed: int = 0) -> List[torch.Tensor]:
    """Sample a full cascade; ``models`` and the result are ordered coarse to fine."""
    if len(models) == 0:
        raise ParameterError("generate_full_stack needs at least one scale model")
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        outs = cascade(models, draw_noise(models, gen))
    return [o.squeeze(0) for o in outs]
