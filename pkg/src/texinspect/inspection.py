"""Test-time defect localisation from the trained discriminators.

Each discriminator scores its level of the test image's pyramid; the
distinguish maps become entropy maps, are upsampled to the test resolution,
averaged with equal weights and thresholded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from .discriminator import discriminate
from .exceptions import CheckpointError, ParameterError
from .imaging import pyramid_at_sizes, resample, save_heatmap, save_mask
from .validation import check_image

ENTROPY_EPS = 1e-12
ENTROPY_MAX = 1.0 / math.e


def entropy_map(m, mode: str = "saliency") -> np.ndarray:
    """Elementwise ``-M ln M`` (``saliency``) or ``M ln M`` (``literal``), natural log.

    ``M`` is clamped to ``[1e-12, 1]`` first.
    """
    if mode not in ("saliency", "literal"):
        raise ParameterError(f"unknown entropy mode {mode!r}")
    if isinstance(m, torch.Tensor):
        m = m.detach().cpu().numpy()
    m = np.clip(np.asarray(m, dtype=np.float64), ENTROPY_EPS, 1.0)
    h = m * np.log(m)
    return -h if mode == "saliency" else h


def fusion_weights(n_maps: int) -> np.ndarray:
    if n_maps < 1:
        raise ParameterError("fusion needs at least one map")
    return np.full(n_maps, 1.0 / n_maps)


def fuse_maps(entropy_maps: Sequence[np.ndarray], target_size: Tuple[int, int]) -> np.ndarray:
    """Resample every map to ``target_size`` and average them with weights 1/(N+1)."""
    if len(entropy_maps) == 0:
        raise ParameterError("fuse_maps needs at least one map")
    th, tw = target_size
    weights = fusion_weights(len(entropy_maps))
    fused = np.zeros((th, tw), dtype=np.float64)
    for w, h in zip(weights, entropy_maps):
        h = np.asarray(h, dtype=np.float64)
        if h.ndim == 3:
            h = h[0]
        fused += w * resample(h, th, tw)
    return fused


def otsu_cut(values: np.ndarray) -> int:
    """Bin index ``t`` maximising between-class variance for the split ``<= t`` / ``> t``.

    ``values`` are integer bins in [0, 255]. The first maximiser wins.
    """
    hist = np.bincount(values.ravel(), minlength=256).astype(np.float64)
    bins = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    s0 = np.cumsum(hist * bins)
    s1 = s0[-1] - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (s0 / w0 - s1 / w1) ** 2
    between = np.where((w0 > 0) & (w1 > 0), between, -1.0)
    return int(np.argmax(between))


def _parse_policy(policy: str):
    if policy == "otsu":
        return "otsu", None
    text = policy[len("percentile"):] if policy.startswith("percentile") else policy
    text = text.strip("()")
    if text.startswith("p"):
        text = text[1:]
    try:
        p = float(text)
    except ValueError:
        raise ParameterError(f"unknown threshold policy {policy!r}") from None
    if not 0.0 <= p <= 100.0:
        raise ParameterError(f"percentile must lie in [0, 100], got {p}")
    return "percentile", p


def threshold_map(fused, policy: str = "otsu", mark: str = "high") -> np.ndarray:
    """Binarise a fused map.

    Policies: ``"otsu"`` (normalise to [0, 1], 256 bins) and ``"percentile(p)"``
    / ``"pXX"`` (mark the top ``100 - p`` percent, ties in scan order).
    ``mark="low"`` selects the low end instead, for maps of inverted sign.
    A constant map gives an empty mask.
    """
    r = np.asarray(fused, dtype=np.float64)
    if not np.isfinite(r).all():
        raise ParameterError("fused map contains non-finite values")
    if mark not in ("high", "low"):
        raise ParameterError("mark must be 'high' or 'low'")
    kind, p = _parse_policy(policy)
    if mark == "low":
        r = -r
    lo, hi = r.min(), r.max()
    if hi == lo:
        return np.zeros(r.shape, dtype=bool)
    if kind == "otsu":
        q = np.clip(np.floor((r - lo) / (hi - lo) * 255.0 + 0.5), 0, 255).astype(np.int64)
        return q > otsu_cut(q)
    k = int(round(r.size * (100.0 - p) / 100.0))
    order = np.argsort(-r.ravel(), kind="stable")
    mask = np.zeros(r.size, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(r.shape)


@dataclass
class InspectionResult:
    fused: np.ndarray
    entropy_maps: List[np.ndarray]
    distinguish_maps: List[np.ndarray]
    mask: np.ndarray
    threshold: str
    weights: np.ndarray
    mode: str = "saliency"
    sizes: List[Tuple[int, int]] = field(default_factory=list)

    def save(self, out_dir, per_scale: bool = False) -> List[Path]:
        """Write ``fused.png`` (16-bit), ``fused.npy``, ``mask.png`` and optionally ``H_<n>.png``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        vmin, vmax = (0.0, ENTROPY_MAX) if self.mode == "saliency" else (-ENTROPY_MAX, 0.0)
        written = [out / "fused.png", out / "fused.npy", out / "mask.png"]
        save_heatmap(self.fused, written[0], vmin, vmax)
        np.save(written[1], self.fused)
        save_mask(self.mask, written[2])
        if per_scale:
            for n, h in enumerate(self.entropy_maps):
                path = out / f"H_{n}.png"
                save_heatmap(h, path, vmin, vmax)
                written.append(path)
        return written


def inspect(stack, test_image, policy: str = "otsu", mode: str = "saliency") -> InspectionResult:
    """Score ``test_image`` with every trained discriminator and fuse the entropy maps.

    The image must have the training resolution and channel count. Generators
    are not used.
    """
    x = check_image(test_image)
    if x.shape[0] != stack.channels:
        raise ParameterError(
            f"test image has {x.shape[0]} channels, model expects {stack.channels}"
        )
    if tuple(x.shape[-2:]) != tuple(stack.sizes[0]):
        raise ParameterError(
            f"test image is {tuple(x.shape[-2:])}, model was trained at {tuple(stack.sizes[0])}"
        )
    if len(stack.models) != len(stack.sizes):
        raise CheckpointError(
            f"checkpoint holds {len(stack.models)} trained scales but the pyramid has "
            f"{len(stack.sizes)} levels"
        )
    pyramid = pyramid_at_sizes(x, stack.sizes)
    dmaps, hmaps = [], []
    with torch.no_grad():
        for n in range(len(stack.sizes)):
            model = stack.model_at(n)
            model.discriminator.eval()
            m = discriminate(model.discriminator, pyramid[n])[0].numpy().astype(np.float64)
            dmaps.append(m)
            hmaps.append(entropy_map(m, mode))
    fused = fuse_maps(hmaps, stack.sizes[0])
    mask = threshold_map(fused, policy, mark="high" if mode == "saliency" else "low")
    return InspectionResult(
        fused=fused,
        entropy_maps=hmaps,
        distinguish_maps=dmaps,
        mask=mask,
        threshold=policy,
        weights=fusion_weights(len(hmaps)),
        mode=mode,
        sizes=list(stack.sizes),
    )
