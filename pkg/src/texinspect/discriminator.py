"""Texture-perceiving discriminator producing a per-pixel distinguish map.

Pipeline: a convolutional stem extracts features; each of eight branches
sees the features concatenated with one directional trend map; the branch
outputs are concatenated and a small head reduces them to one logit per
pixel. All convolutions are zero padded so every stage keeps ``H x W``.
"""

from __future__ import annotations

import torch
from torch import nn

from .directional import DIRECTIONS, make_directional_set
from .exceptions import ParameterError
from .generator import conv_block, init_weights
from .validation import check_min_size

STEM_BLOCKS = 3
STEM_RECEPTIVE_FIELD = 1 + 2 * STEM_BLOCKS
# keeps the sigmoid output strictly inside (0, 1) in float32
_PROB_EPS = 1e-7


class TextureDiscriminator(nn.Module):
    def __init__(
        self,
        channels: int = 3,
        width: int = 32,
        branch_width: int = 8,
        scale_index: int = 0,
        shared_branches: bool = False,
        texture_module: bool = True,
        eval_stats: str = "image",
        directions=DIRECTIONS,
    ):
        super().__init__()
        if sorted(directions) != sorted(DIRECTIONS):
            raise ParameterError(f"directions must be a permutation of {DIRECTIONS}")
        self.directions = tuple(directions)
        self.channels = channels
        self.width = width
        self.branch_width = branch_width
        self.scale_index = scale_index
        self.shared_branches = shared_branches
        self.texture_module = texture_module
        self.eval_stats = eval_stats

        stem = [conv_block(channels, width, nn.LeakyReLU(0.2), eval_stats)]
        stem += [conv_block(width, width, nn.LeakyReLU(0.2), eval_stats) for _ in range(STEM_BLOCKS - 1)]
        self.stem = nn.Sequential(*stem)

        if texture_module:
            n_sets = 1 if shared_branches else len(DIRECTIONS)
            self.branches = nn.ModuleList(
                conv_block(width + 1, branch_width, nn.ReLU(), eval_stats) for _ in range(n_sets)
            )
            head_in = branch_width * len(DIRECTIONS)
        else:
            self.branches = nn.ModuleList()
            head_in = width
        self.head = nn.Sequential(
            conv_block(head_in, width, nn.LeakyReLU(0.2), eval_stats),
            nn.Conv2d(width, 1, kernel_size=3, padding=1),
        )
        self.apply(init_weights)

    def branch(self, i: int) -> nn.Module:
        return self.branches[0 if self.shared_branches else i]

    def trend_maps(self, height: int, width: int, like: torch.Tensor) -> torch.Tensor:
        order = [DIRECTIONS.index(d) for d in self.directions]
        maps = torch.from_numpy(make_directional_set(height, width)[order])
        return maps.to(dtype=like.dtype, device=like.device)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Per-pixel logits shaped ``(B, 1, H, W)``."""
        feats = self.stem(x)
        if not self.texture_module:
            return self.head(feats)
        maps = self.trend_maps(x.shape[-2], x.shape[-1], feats)
        parts = [
            direction_branch(self, i, feats, maps[i]) for i in range(len(DIRECTIONS))
        ]
        return self.head(torch.cat(parts, dim=1))


def _batched(x: torch.Tensor) -> torch.Tensor:
    return x.unsqueeze(0) if x.ndim == 3 else x


def extract_features(disc: TextureDiscriminator, image: torch.Tensor) -> torch.Tensor:
    x = _batched(image)
    check_min_size(x.shape[-2], x.shape[-1], STEM_RECEPTIVE_FIELD, "discriminator stem")
    out = disc.stem(x)
    return out if image.ndim == 4 else out.squeeze(0)


def direction_branch(
    disc: TextureDiscriminator, index: int, features: torch.Tensor, trend_map
) -> torch.Tensor:
    """Concatenate one trend map onto ``features`` and apply branch ``index``."""
    feats = _batched(features)
    t = torch.as_tensor(trend_map, dtype=feats.dtype, device=feats.device)
    if tuple(t.shape[-2:]) != tuple(feats.shape[-2:]):
        raise ParameterError(
            f"trend map {tuple(t.shape[-2:])} does not match features {tuple(feats.shape[-2:])}"
        )
    t = t.reshape(1, 1, *t.shape[-2:]).expand(feats.shape[0], 1, -1, -1)
    out = disc.branch(index)(torch.cat([feats, t], dim=1))
    return out if features.ndim == 4 else out.squeeze(0)


def discriminate(disc: TextureDiscriminator, image: torch.Tensor) -> torch.Tensor:
    """Distinguish map ``M`` shaped ``(1, H, W)`` (or ``(B, 1, H, W)``), values in (0, 1)."""
    x = _batched(image)
    check_min_size(x.shape[-2], x.shape[-1], STEM_RECEPTIVE_FIELD, "discriminator")
    m = torch.sigmoid(disc(x)).clamp(_PROB_EPS, 1.0 - _PROB_EPS)
    return m if image.ndim == 4 else m.squeeze(0)
