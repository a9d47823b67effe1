import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from texinspect.directional import DIRECTIONS, OFFSETS, make_directional_map, make_directional_set
from texinspect.exceptions import ParameterError

FLIPS = {
    "h": lambda m: m[:, ::-1],
    "v": lambda m: m[::-1, :],
    "hv": lambda m: m[::-1, ::-1],
}
# image of each direction under each flip
FLIP_TABLE = {
    "h": {"left": "right", "top-left": "top-right", "bottom-left": "bottom-right", "top": "top", "bottom": "bottom"},
    "v": {"top": "bottom", "top-left": "bottom-left", "top-right": "bottom-right", "left": "left", "right": "right"},
    "hv": {"top-left": "bottom-right", "top-right": "bottom-left", "left": "right", "top": "bottom"},
}


def _ramp_oracle(direction, h, w):
    # brute force: evaluate the ramp pixel by pixel from its definition
    di, dj = OFFSETS[direction]
    p = [[di * i + dj * j for j in range(w)] for i in range(h)]
    flat = [v for row in p for v in row]
    lo, hi = min(flat), max(flat)
    if hi == lo:
        return np.ones((h, w))
    return np.array([[1 - (v - lo) / (hi - lo) for v in row] for row in p])


def test_left_row():
    np.testing.assert_allclose(make_directional_map("left", 1, 3), [[0.0, 0.5, 1.0]])


def test_bottom_right_2x2():
    np.testing.assert_allclose(make_directional_map("bottom-right", 2, 2), [[1, 0.5], [0.5, 0]])


@pytest.mark.parametrize("d", DIRECTIONS)
def test_single_pixel_is_one(d):
    assert make_directional_map(d, 1, 1).tolist() == [[1.0]]


@pytest.mark.parametrize("d", DIRECTIONS)
@pytest.mark.parametrize("h, w", [(1, 3), (3, 3), (5, 2), (17, 31)])
def test_matches_brute_force(d, h, w):
    np.testing.assert_allclose(make_directional_map(d, h, w), _ramp_oracle(d, h, w), atol=1e-12)


def test_unknown_direction():
    with pytest.raises(ParameterError):
        make_directional_map("up", 3, 3)


def test_set_shape_and_order():
    maps = make_directional_set(3, 3)
    assert maps.shape == (8, 3, 3)
    for k, d in enumerate(DIRECTIONS):
        np.testing.assert_array_equal(maps[k], make_directional_map(d, 3, 3))
    assert not maps.flags.writeable


def test_left_is_mirror_of_right():
    maps = dict(zip(DIRECTIONS, make_directional_set(6, 9)))
    np.testing.assert_array_equal(maps["left"], maps["right"][:, ::-1])


def test_top_left_is_reversed_bottom_right():
    h, w = 5, 8
    tl = make_directional_map("top-left", h, w)
    br = make_directional_map("bottom-right", h, w)
    oracle = _ramp_oracle("bottom-right", h, w)[::-1, ::-1]
    np.testing.assert_allclose(tl, oracle, atol=1e-12)
    np.testing.assert_allclose(tl, br[::-1, ::-1], atol=1e-12)


@given(st.sampled_from(DIRECTIONS), st.integers(1, 25), st.integers(1, 25))
def test_monotone_and_range(d, h, w):
    m = make_directional_map(d, h, w)
    di, dj = OFFSETS[d]
    assert m.min() >= 0 and m.max() <= 1
    # a step along the named direction never increases the value
    for i in range(h):
        for j in range(w):
            i2, j2 = i + di, j + dj
            if 0 <= i2 < h and 0 <= j2 < w:
                assert m[i2, j2] < m[i, j]
    extent = (h - 1) * abs(di) + (w - 1) * abs(dj)
    if extent > 0:
        assert abs(m.min()) <= 1e-12 and abs(m.max() - 1) <= 1e-12


@given(st.integers(1, 20), st.integers(1, 20))
def test_flip_closure(h, w):
    maps = dict(zip(DIRECTIONS, make_directional_set(h, w)))
    for flip, table in FLIP_TABLE.items():
        for src, dst in table.items():
            np.testing.assert_allclose(FLIPS[flip](maps[src]), maps[dst], atol=1e-12)
            np.testing.assert_allclose(FLIPS[flip](maps[dst]), maps[src], atol=1e-12)
