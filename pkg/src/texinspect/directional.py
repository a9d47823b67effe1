"""Fixed directional trend maps that guide the discriminator's texture branches.

Each map is a linear ramp equal to 1 at one edge/corner of the grid and 0 at
the edge/corner its label names; e.g. ``"left"`` is 0 along the left column
and 1 along the right one. Diagonal ramps run over ``i + j`` (or a reflection
of it) normalised by ``H + W - 2``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

from .exceptions import ParameterError

DIRECTIONS: Tuple[str, ...] = (
    "top",
    "bottom",
    "left",
    "right",
    "top-left",
    "bottom-left",
    "top-right",
    "bottom-right",
)

# (row step, column step) pointing towards the named edge/corner
OFFSETS: Dict[str, Tuple[int, int]] = {
    "top": (-1, 0),
    "bottom": (1, 0),
    "left": (0, -1),
    "right": (0, 1),
    "top-left": (-1, -1),
    "bottom-left": (1, -1),
    "top-right": (-1, 1),
    "bottom-right": (1, 1),
}


def make_directional_map(direction: str, height: int, width: int) -> np.ndarray:
    """Return the ``(height, width)`` float64 ramp for ``direction``.

    The ramp is ``1 - (p - p_min) / (p_max - p_min)`` where ``p`` projects the
    pixel index onto the direction's offset. When the grid has no extent along
    the direction the map is constant 1.
    """
    if direction not in OFFSETS:
        raise ParameterError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")
    if height < 1 or width < 1:
        raise ParameterError("height and width must be >= 1")
    di, dj = OFFSETS[direction]
    ii, jj = np.mgrid[0:height, 0:width]
    p = (di * ii + dj * jj).astype(np.float64)
    span = p.max() - p.min()
    if span == 0:
        return np.ones((height, width))
    return 1.0 - (p - p.min()) / span


@lru_cache(maxsize=128)
def _cached_set(height: int, width: int) -> np.ndarray:
    maps = np.stack([make_directional_map(d, height, width) for d in DIRECTIONS])
    maps.setflags(write=False)
    return maps


def make_directional_set(height: int, width: int) -> np.ndarray:
    """All eight maps stacked as ``(8, height, width)`` in :data:`DIRECTIONS` order.

    Results are cached per size and returned read-only.
    """
    if height < 1 or width < 1:
        raise ParameterError("height and width must be >= 1")
    return _cached_set(int(height), int(width))
