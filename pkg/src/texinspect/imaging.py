"""Image I/O, pyramid construction, bilinear resampling and synthetic textures.

Images are float arrays shaped ``(C, H, W)`` with values in [-1, 1]; the
8-bit <-> [-1, 1] mapping happens only at the file boundary. Resampling uses
the corner-aligned bilinear convention throughout (corner pixel centres of
source and target coincide).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage

from .exceptions import ImageFormatError, ParameterError

_CHANNELS = {"L": 1, "RGB": 3}


def to_unit_range(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit values [0, 255] linearly onto [-1, 1]."""
    return pixels.astype(np.float32) / 127.5 - 1.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    arr = np.clip((np.asarray(image, dtype=np.float64) + 1.0) * 127.5, 0, 255)
    return np.rint(arr).astype(np.uint8)


def load_image(path, target_size=256) -> np.ndarray:
    """Read a raster file, resize it and return a ``(C, H, W)`` float32 array.

    ``target_size`` is an int (square output) or an ``(height, width)`` pair;
    ``None`` keeps the native size. Palette images are expanded to RGB;
    two- and four-channel layouts are rejected.
    """
    path = Path(path)
    try:
        img = PILImage.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if img.mode == "P":
        img = img.convert("RGB")
    elif img.mode in ("1", "I;16", "I"):
        img = img.convert("L")
    if img.mode not in _CHANNELS:
        raise ImageFormatError(f"{path}: unsupported image mode {img.mode!r}")
    if target_size is not None:
        if isinstance(target_size, int):
            target_size = (target_size, target_size)
        th, tw = (int(v) for v in target_size)
        if th < 1 or tw < 1:
            raise ParameterError("target_size must be >= 1")
        if (img.height, img.width) != (th, tw):
            img = img.resize((tw, th), PILImage.BILINEAR)
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return np.ascontiguousarray(to_unit_range(arr))


def _atomic_save(pil_img: PILImage.Image, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    pil_img.save(tmp, format="PNG")
    os.replace(tmp, path)


def save_image(image, path) -> None:
    """Write a [-1, 1] image as an 8-bit PNG."""
    arr = np.asarray(image)
    if arr.ndim == 3:
        arr = arr[0] if arr.shape[0] == 1 else arr.transpose(1, 2, 0)
    _atomic_save(PILImage.fromarray(to_uint8(arr)), path)


def save_mask(mask, path) -> None:
    """Write a binary mask as single-channel PNG, 0 = normal, 255 = defect."""
    arr = np.asarray(mask).astype(bool)
    if arr.ndim == 3:
        arr = arr[0]
    _atomic_save(PILImage.fromarray(arr.astype(np.uint8) * 255), path)


def load_mask(path, target_size=None) -> np.ndarray:
    img = PILImage.open(path).convert("L")
    if target_size is not None:
        if isinstance(target_size, int):
            target_size = (target_size, target_size)
        th, tw = target_size
        if (img.height, img.width) != (th, tw):
            img = img.resize((tw, th), PILImage.NEAREST)
    return np.asarray(img) > 127


def save_heatmap(values, path, vmin: float, vmax: float) -> None:
    """Write a real-valued map as 16-bit grayscale, linearly scaled from [vmin, vmax]."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[0]
    scaled = np.clip((arr - vmin) / (vmax - vmin), 0.0, 1.0) * 65535.0
    _atomic_save(PILImage.fromarray(np.rint(scaled).astype(np.uint16)), path)


def load_heatmap(path, vmin: float, vmax: float) -> np.ndarray:
    arr = np.asarray(PILImage.open(path), dtype=np.float64)
    return vmin + arr / 65535.0 * (vmax - vmin)


# ----------------------------------------------------------------------------
# resampling


def _resample_tensor(t: torch.Tensor, h: int, w: int, mode: str) -> torch.Tensor:
    squeeze = 0
    while t.ndim < 4:
        t = t.unsqueeze(0)
        squeeze += 1
    if mode == "bilinear":
        out = F.interpolate(t, size=(h, w), mode="bilinear", align_corners=True)
    elif mode == "area":
        out = F.interpolate(t, size=(h, w), mode="area")
    else:
        raise ParameterError(f"unknown resampling mode {mode!r}")
    out = out.clamp(-1.0, 1.0)
    for _ in range(squeeze):
        out = out.squeeze(0)
    return out


def resample(image, target_height: int, target_width: int, mode: str = "bilinear"):
    """Resize the trailing two axes of ``image`` to ``(target_height, target_width)``.

    Works on numpy arrays and tensors (gradients flow through the latter).
    Output is clamped to [-1, 1]; a same-size request returns the input as is.
    """
    target_height, target_width = int(target_height), int(target_width)
    if target_height < 1 or target_width < 1:
        raise ParameterError("resample targets must be >= 1")
    if tuple(image.shape[-2:]) == (target_height, target_width):
        return image
    if isinstance(image, torch.Tensor):
        return _resample_tensor(image, target_height, target_width, mode)
    arr = np.asarray(image)
    t = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float64))
    out = _resample_tensor(t, target_height, target_width, mode).numpy()
    return out.astype(arr.dtype if arr.dtype.kind == "f" else np.float64)


# ----------------------------------------------------------------------------
# pyramid


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def pyramid_sizes(
    height: int, width: int, scale_factor: float = 0.75, min_dim: int = 24
) -> List[Tuple[int, int]]:
    """Level sizes, finest first: ``round(size_0 * r**n)`` while the smaller side stays >= min_dim."""
    if not 0.0 < scale_factor < 1.0:
        raise ParameterError("scale_factor must lie in (0, 1)")
    if min_dim < 4:
        raise ParameterError("min_dim must be >= 4")
    sizes = [(int(height), int(width))]
    n = 1
    while True:
        h = _round_half_up(height * scale_factor**n)
        w = _round_half_up(width * scale_factor**n)
        if min(h, w) < min_dim:
            break
        sizes.append((h, w))
        n += 1
    return sizes


@dataclass
class ImagePyramid:
    """Multi-resolution copies of one image; ``levels[0]`` is the finest."""

    levels: List[np.ndarray]
    scale_factor: float
    min_dim: int
    sizes: List[Tuple[int, int]] = field(init=False)

    def __post_init__(self):
        self.sizes = [tuple(lvl.shape[-2:]) for lvl in self.levels]

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def coarsest_index(self) -> int:
        return len(self.levels) - 1

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, n):
        return self.levels[n]


def build_pyramid(
    image,
    scale_factor: float = 0.75,
    min_dim: int = 24,
    n_scales: int | None = None,
    mode: str = "bilinear",
) -> ImagePyramid:
    """Downsample ``image`` into a pyramid.

    Every level is resampled from the original (not from its neighbour) to
    avoid compounding rounding. ``n_scales`` keeps only the finest levels.
    An input already below ``min_dim`` yields a single-level pyramid.
    """
    h, w = image.shape[-2:]
    sizes = pyramid_sizes(h, w, scale_factor, min_dim)
    if n_scales is not None:
        if n_scales < 1:
            raise ParameterError("n_scales must be >= 1")
        if n_scales > len(sizes):
            raise ParameterError(
                f"{n_scales} scales requested but only {len(sizes)} fit above min_dim={min_dim}"
            )
        sizes = sizes[:n_scales]
    levels = [image] + [resample(image, sh, sw, mode=mode) for sh, sw in sizes[1:]]
    return ImagePyramid(levels=levels, scale_factor=scale_factor, min_dim=min_dim)


def pyramid_at_sizes(image, sizes: Sequence[Tuple[int, int]], mode: str = "bilinear") -> ImagePyramid:
    """Resample ``image`` to an explicit list of level sizes (used at test time)."""
    levels = [resample(image, h, w, mode=mode) for h, w in sizes]
    return ImagePyramid(levels=levels, scale_factor=float("nan"), min_dim=0)


# ----------------------------------------------------------------------------
# synthetic textures


@dataclass
class SynthSpec:
    family: str = "stripes"  # stripes | checker | perlin
    size: int = 64
    defect_shape: str = "rect"  # rect | blob
    defect_size: int = 10
    defect_offset: float = 0.6
    seed: int = 0
    period: int = 8
    noise: float = 0.05
    channels: int = 1

    def validate(self) -> None:
        if self.family not in ("stripes", "checker", "perlin"):
            raise ParameterError(f"unknown texture family {self.family!r}")
        if self.defect_shape not in ("rect", "blob"):
            raise ParameterError(f"unknown defect shape {self.defect_shape!r}")
        if self.size < 1 or self.period < 2 or self.channels not in (1, 3):
            raise ParameterError("invalid size, period or channel count")
        if self.defect_offset != 0:
            if self.defect_size < 1 or self.defect_size > self.size:
                raise ParameterError(
                    f"defect size {self.defect_size} does not fit a {self.size}px image"
                )


def _base_texture(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.size
    ii, jj = np.mgrid[0:n, 0:n].astype(np.float64)
    if spec.family == "stripes":
        base = 0.7 * np.sin(2 * np.pi * ii / spec.period)
    elif spec.family == "checker":
        cells = (np.floor(ii / spec.period) + np.floor(jj / spec.period)) % 2
        base = 0.6 * (2 * cells - 1)
    else:
        # value noise: octaves of bilinearly upsampled random grids
        base = np.zeros((n, n))
        amp, total = 1.0, 0.0
        cells = max(2, n // spec.period)
        while cells <= n:
            grid = rng.uniform(-1, 1, size=(1, cells, cells))
            base += amp * resample(grid, n, n)[0]
            total += amp
            amp *= 0.5
            cells *= 2
        base = 0.7 * base / total
    return base + spec.noise * rng.standard_normal((n, n))


def synth_texture_sample(spec: SynthSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Render a texture with at most one injected defect.

    Returns ``(image, mask)`` with image ``(C, size, size)`` in [-1, 1] and a
    boolean ``(size, size)`` mask marking exactly the pixels that received the
    intensity offset. Fully determined by ``spec`` (including ``seed``).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.size
    tex = _base_texture(spec, rng)
    mask = np.zeros((n, n), dtype=bool)
    if spec.defect_offset != 0:
        area = spec.defect_size**2 if spec.defect_shape == "rect" else None
        k = spec.defect_size
        top = int(rng.integers(0, n - k + 1))
        left = int(rng.integers(0, n - k + 1))
        if spec.defect_shape == "rect":
            mask[top : top + k, left : left + k] = True
        else:
            r = (k - 1) / 2.0
            ay = r * rng.uniform(0.6, 1.0)
            ax = r * rng.uniform(0.6, 1.0)
            yy, xx = np.mgrid[0:k, 0:k] - r
            mask[top : top + k, left : left + k] = (yy / max(ay, 0.5)) ** 2 + (xx / max(ax, 0.5)) ** 2 <= 1.0
            area = int(mask.sum())
        frac = area / float(n * n)
        if not 0.01 <= frac <= 0.25:
            raise ParameterError(f"defect covers {frac:.1%} of the image; allowed 1%-25%")
        tex = tex + spec.defect_offset * mask
    img = np.clip(tex, -1.0, 1.0).astype(np.float32)
    img = np.repeat(img[None], spec.channels, axis=0)
    return img, mask
