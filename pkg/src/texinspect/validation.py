"""Input validation helpers shared by the estimator and the functional API."""

from __future__ import annotations

import numpy as np
import torch

from .exceptions import ParameterError


def check_image(image, *, allow_batch: bool = False) -> torch.Tensor:
    """Coerce ``image`` to a float32 tensor shaped ``(C, H, W)``.

    Accepts numpy arrays or tensors shaped ``(H, W)`` or ``(C, H, W)`` with
    ``C`` in {1, 3} and values in [-1, 1]. With ``allow_batch`` a leading
    batch axis ``(B, C, H, W)`` is kept.
    """
    if isinstance(image, torch.Tensor):
        t = image.detach().to(torch.float32)
    else:
        arr = np.asarray(image, dtype=np.float32)
        t = torch.from_numpy(np.ascontiguousarray(arr))
    if t.ndim == 2:
        t = t.unsqueeze(0)
    if t.ndim == 4 and not allow_batch:
        raise ParameterError(f"expected a single image, got batch shape {tuple(t.shape)}")
    if t.ndim not in (3, 4):
        raise ParameterError(f"image must be (H, W) or (C, H, W), got shape {tuple(t.shape)}")
    if t.shape[-3] not in (1, 3):
        raise ParameterError(f"image must have 1 or 3 channels, got {t.shape[-3]}")
    if t.shape[-1] < 1 or t.shape[-2] < 1:
        raise ParameterError("image height and width must be >= 1")
    if not torch.isfinite(t).all():
        raise ParameterError("image contains non-finite values")
    if t.numel() and (t.min() < -1.0 or t.max() > 1.0):
        raise ParameterError("image values must lie in [-1, 1]")
    return t


def check_mask(mask, name: str = "mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr.astype(bool)


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")


def check_min_size(height: int, width: int, minimum: int, what: str) -> None:
    if height < minimum or width < minimum:
        raise ParameterError(
            f"{what} needs at least {minimum}x{minimum} input, got {height}x{width}"
        )
