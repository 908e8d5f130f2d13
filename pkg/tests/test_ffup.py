import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import scaleform.numerics as nx
from scaleform.errors import ConfigError
from scaleform.ffup import FFUP, ScalePair, build_grid, condition, grid_sample, project, resize_bilinear, upsample
from scaleform.harness import gradcheck as runner
from scaleform.numerics import gradcheck as gc
from scaleform.numerics.tensor import Tensor

from conftest import SEEDS

scales = st.floats(1.0, 16.0, allow_nan=False)


def naive_bilinear(f, h_out, w_out, s_h, s_v):
    """Per-pixel loop: half-pixel projection, clamp to edge, lerp."""
    n, c, h, w = f.shape
    out = np.zeros((n, c, h_out, w_out))
    for y in range(h_out):
        for x in range(w_out):
            xs = min(max((x + 0.5) / s_h - 0.5, 0.0), w - 1.0)
            ys = min(max((y + 0.5) / s_v - 0.5, 0.0), h - 1.0)
            x0, y0 = int(math.floor(xs)), int(math.floor(ys))
            x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
            ax, ay = xs - x0, ys - y0
            top = f[:, :, y0, x0] * (1.0 - ax) + f[:, :, y0, x1] * ax
            bot = f[:, :, y1, x0] * (1.0 - ax) + f[:, :, y1, x1] * ax
            out[:, :, y, x] = top * (1.0 - ay) + bot * ay
    return out


# -- ScalePair / grid ---------------------------------------------------------

def test_scale_pair_bounds():
    with pytest.raises(ConfigError):
        ScalePair(0.9, 1.0)
    with pytest.raises(ConfigError):
        ScalePair(1.0, 16.5)
    with pytest.raises(ConfigError):
        ScalePair(float("nan"), 2.0)
    assert ScalePair.parse("2.5") == ScalePair(2.5, 2.5)
    assert ScalePair.parse("1.5,3") == ScalePair(1.5, 3.0)


def test_output_size_rounding():
    assert ScalePair(1.0, 1.5).output_size(16, 16) == (24, 16)
    # ties go to even
    assert ScalePair(1.5, 2.5).output_size(3, 3) == (8, 4)


@pytest.mark.parametrize(
    "x,s,xp,r",
    [(0, 1.0, 0.0, 0.0), (0, 2.0, -0.25, -0.25), (3, 1.5, 1.8333333333333333, -0.16666666666666666)],
)
def test_grid_hand_values(x, s, xp, r):
    grid = build_grid(4, 8, ScalePair(s, s))
    assert abs(grid.x_prime[x] - xp) <= 1e-12
    assert abs(grid.rx[x] - r) <= 1e-12


@given(scales, st.integers(1, 64))
def test_grid_invariants(s, n):
    prime, rel = project(n, s)
    x = np.arange(n, dtype=np.float64)
    assert np.array_equal(prime, (x + 0.5) / s - 0.5)
    assert np.array_equal(rel, prime - np.floor((x + 0.5) / s))
    assert np.all(rel > -1) and np.all(rel <= 0.5)


def test_grid_rows_and_shape():
    grid = build_grid(3, 5, ScalePair(1.5, 2.0))
    rows = list(grid.rows())
    assert grid.shape == (3, 5) and len(rows) == 15
    x, y, xp, yp, rx, ry = rows[7]
    assert (x, y) == (2, 1)
    assert xp == grid.x_prime[2] and ry == grid.ry[1]


def test_grid_rejects_empty():
    with pytest.raises(ConfigError):
        build_grid(0, 3, ScalePair(1, 1))


# -- conditioning -------------------------------------------------------------

def test_condition_shapes_and_zero_offsets(rng):
    mod = FFUP(16, rng, squeeze_ratio=4)
    grid = build_grid(6, 10, ScalePair(2.5, 1.5))
    offsets, weights = condition(ScalePair(2.5, 1.5), grid, mod)
    assert offsets.shape == (6, 10, 2) and weights.shape == (6, 10, 4)
    assert np.all(offsets.data == 0.0)


@pytest.mark.parametrize("s", [2, 3, 4])
def test_condition_periodic_for_integer_scales(s, rng):
    mod = FFUP(8, rng, squeeze_ratio=2)
    for p in mod.parameters():
        p.data = p.data + rng.normal(0, 0.3, p.data.shape)
    scale = ScalePair(float(s), float(s))
    grid = build_grid(4 * s, 4 * s, scale)
    offsets, weights = condition(scale, grid, mod)
    for t in (offsets.data, weights.data):
        assert np.array_equal(t[s:], t[:-s])
        assert np.array_equal(t[:, s:], t[:, :-s])


def test_offsets_are_clamped(rng):
    mod = FFUP(4, rng, squeeze_ratio=2, clamp_off=0.75)
    mod.offset_head.weight.data[:] = 50.0
    mod.offset_head.bias.data[:] = 50.0
    offsets, _ = condition(ScalePair(1.7, 1.7), build_grid(5, 5, ScalePair(1.7, 1.7)), mod)
    assert np.all(np.abs(offsets.data) <= 0.75)


# -- grid sampling ------------------------------------------------------------

def test_sample_at_integer_nodes(rng):
    f = rng.normal(size=(1, 3, 4, 4))
    grid = build_grid(4, 4, ScalePair(1, 1))
    assert np.array_equal(grid_sample(f, grid, np.zeros((4, 4, 2))).data, f)


def test_sample_midpoint(rng):
    f = rng.normal(size=(1, 2, 3, 3))
    grid = build_grid(3, 3, ScalePair(1, 1))
    off = np.zeros((3, 3, 2))
    off[:, :, 0] = 0.5
    out = grid_sample(f, grid, off).data
    assert np.allclose(out[..., 1, 0], (f[..., 1, 0] + f[..., 1, 1]) / 2, atol=1e-15)


@given(st.integers(0, 10**6))
def test_sample_stays_within_feature_range(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(1, 2, 5, 4))
    grid = build_grid(7, 9, ScalePair(2.2, 1.4))
    off = rng.uniform(-3, 3, (7, 9, 2))
    out = grid_sample(f, grid, off).data
    for c in range(2):
        assert out[0, c].min() >= f[0, c].min() - 1e-12
        assert out[0, c].max() <= f[0, c].max() + 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_offset_gradient_matches_differences(seed):
    rng = np.random.default_rng(seed)
    f = Tensor(rng.normal(size=(1, 3, 5, 6)), requires_grad=True)
    grid = build_grid(7, 8, ScalePair(1.3, 1.4))
    # keep coordinates off integer knots where bilinear sampling has kinks
    off = Tensor(rng.uniform(-0.4, 0.4, (7, 8, 2)), requires_grad=True)
    proj = rng.normal(size=(1, 3, 7, 8))
    report = gc.check(lambda: nx.sum(grid_sample(f, grid, off) * proj), [("f", f), ("offsets", off)], rng=rng)
    assert report.ok, report.errors


# -- upsample -----------------------------------------------------------------

def test_identity_at_unit_scale(rng):
    mod = FFUP(8, rng, squeeze_ratio=4)
    f = rng.normal(size=(2, 8, 7, 5))
    assert np.array_equal(upsample(f, ScalePair(1, 1), mod).data, f)


def test_scale_two_matches_naive_bilinear(rng):
    mod = FFUP(4, rng, squeeze_ratio=2)
    f = rng.normal(size=(1, 4, 8, 8))
    out = upsample(f, ScalePair(2, 2), mod).data
    assert np.array_equal(out, naive_bilinear(f, 16, 16, 2.0, 2.0))


@pytest.mark.parametrize("s_h,s_v", [(1.5, 1.5), (2.4, 3.1), (4.0, 1.0)])
def test_fractional_fresh_module_is_bilinear(s_h, s_v, rng):
    mod = FFUP(4, rng, squeeze_ratio=2)
    f = rng.normal(size=(1, 4, 5, 6))
    h, w = ScalePair(s_h, s_v).output_size(5, 6)
    out = upsample(f, ScalePair(s_h, s_v), mod).data
    assert np.max(np.abs(out - naive_bilinear(f, h, w, s_h, s_v))) < 1e-14
    assert np.array_equal(out, resize_bilinear(f, h, w, (s_h, s_v)))


@given(st.floats(1.0, 6.0), st.floats(1.0, 6.0), st.integers(2, 9), st.integers(2, 9))
def test_output_dims_follow_rounding(s_h, s_v, h, w):
    rng = np.random.default_rng(0)
    mod = FFUP(4, rng, squeeze_ratio=2)
    for p in mod.parameters():
        p.data = p.data + rng.normal(0, 0.2, p.data.shape)
    out = upsample(np.ones((1, 4, h, w)), ScalePair(s_h, s_v), mod)
    assert out.shape[-2:] == (round(s_v * h), round(s_h * w))


def test_channel_divisibility():
    with pytest.raises(ConfigError):
        FFUP(10, np.random.default_rng(0), squeeze_ratio=4)


def test_channel_mismatch(rng):
    with pytest.raises(ConfigError):
        upsample(np.ones((1, 3, 4, 4)), ScalePair(2, 2), FFUP(8, rng))


@pytest.mark.parametrize("seed", SEEDS)
def test_full_parameter_gradients(seed):
    report = runner.check_ffup(seed)
    assert report.ok, report.failures


def test_wide_neighbourhood_gradients():
    report = runner.check_ffup(0, k=3, scale=(1.6, 2.2))
    assert report.ok, report.failures


def test_deterministic(rng):
    mod = FFUP(8, rng, squeeze_ratio=2)
    for p in mod.parameters():
        p.data = p.data + rng.normal(0, 0.2, p.data.shape)
    f = rng.normal(size=(1, 8, 5, 5))
    assert np.array_equal(upsample(f, ScalePair(1.7, 2.3), mod).data, upsample(f, ScalePair(1.7, 2.3), mod).data)
