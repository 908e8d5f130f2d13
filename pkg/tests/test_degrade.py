import math

import numpy as np
import pytest
import scipy.fft
from hypothesis import given
from hypothesis import strategies as st

from scaleform.degrade import (
    DegradationRanges,
    DegradationSpec,
    adjust_color,
    awgn,
    color_jitter,
    degrade,
    downsample,
    gaussian_blur,
    gaussian_kernel,
    noise_field,
    sample_spec,
)
from scaleform.errors import ConfigError, RangeError
from scaleform.harness.data import synth_face
from scaleform.jpeg import (
    CHROMA_TABLE,
    LUMA_TABLE,
    RGB_TO_YCC,
    YCC_TO_RGB,
    block_dct,
    block_idct,
    dct_matrix,
    jpeg_sim,
    quality_scale,
    quant_table,
)
from scaleform.objective import psnr

unit_images = st.integers(0, 10**6).map(lambda s: np.random.default_rng(s).uniform(0, 1, (3, 16, 16)))


def gradient_image(h=32, w=32):
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    return np.stack([0.2 + 0.6 * xx, 0.3 + 0.4 * yy, 0.5 + 0.3 * (xx - yy)])


# -- blur ---------------------------------------------------------------------

def test_blur_sigma_zero_is_identity(rng):
    img = rng.uniform(size=(3, 9, 9))
    assert np.array_equal(gaussian_blur(img, 0.0), img)
    assert np.array_equal(gaussian_blur(img, 0.04), img)


def test_blur_keeps_constant():
    img = np.full((3, 12, 12), 0.37)
    assert np.allclose(gaussian_blur(img, 2.3), 0.37, atol=1e-15)


def test_blur_impulse_matches_direct_sum():
    sigma = 1.0
    img = np.zeros((1, 15, 15))
    img[0, 7, 7] = 1.0
    out = gaussian_blur(img, sigma)
    x = np.arange(-3, 4)
    w = np.exp(-(x**2) / 2.0)
    w /= w.sum()
    assert abs(out[0, 7, 7] - w[3] ** 2) < 1e-15
    assert np.allclose(out[0, 7, 4:11], w[3] * w, atol=1e-15)


def test_kernel_radius_and_normalisation():
    k = gaussian_kernel(1.7)
    assert len(k) == 2 * math.ceil(3 * 1.7) + 1
    assert abs(k.sum() - 1) < 1e-15


# -- downsample ---------------------------------------------------------------

def test_downsample_identity_and_constant(rng):
    img = rng.uniform(size=(3, 16, 16))
    assert np.array_equal(downsample(img, 1.0), img)
    assert np.allclose(downsample(np.full((3, 32, 32), 0.6), 2.7), 0.6, atol=1e-15)


def test_downsample_checkerboard_to_mid_gray():
    board = np.indices((32, 32)).sum(axis=0) % 2
    img = np.broadcast_to(board, (3, 32, 32)).astype(np.float64)
    out = downsample(img, 2.0)
    assert out.shape == (3, 16, 16)
    assert np.allclose(out, 0.5, atol=1e-15)


def test_downsample_sizes_and_range_error():
    assert downsample(np.zeros((3, 30, 20)), 2.5).shape == (3, 12, 8)
    with pytest.raises(RangeError):
        downsample(np.zeros((3, 32, 32)), 5.0)
    with pytest.raises(ConfigError):
        downsample(np.zeros((3, 32, 32)), 0.5)


# -- noise ------------------------------------------------------------------

def test_noise_zero_is_identity(rng):
    img = rng.uniform(size=(3, 8, 8))
    assert np.array_equal(awgn(img, 0.0, 5), img)


def test_noise_statistics():
    delta = 10.0
    field = noise_field((1, 1000, 1000), delta, seed=3)
    assert abs(field.std() / (delta / 255) - 1) < 0.02
    noisy = awgn(np.full((1, 1000, 1000), 0.5), delta, 3)
    assert abs((noisy - 0.5).std() / (delta / 255) - 1) < 0.02


def test_noise_deterministic(rng):
    img = rng.uniform(size=(3, 8, 8))
    assert np.array_equal(awgn(img, 7.0, 11), awgn(img, 7.0, 11))
    assert not np.array_equal(awgn(img, 7.0, 11), awgn(img, 7.0, 12))


# -- JPEG ---------------------------------------------------------------------

def test_dct_matrix_is_orthonormal_and_matches_scipy():
    d = dct_matrix(8)
    assert np.allclose(d @ d.T, np.eye(8), atol=1e-14)
    assert np.allclose(d, scipy.fft.dct(np.eye(8), norm="ortho", axis=0), atol=1e-15)


def test_block_dct_matches_scipy(rng):
    plane = rng.uniform(0, 255, (16, 24))
    coefs = block_dct(plane)
    ref = scipy.fft.dctn(plane[8:16, 16:24], norm="ortho")
    assert coefs.shape[-2:] == (8, 8)
    assert np.allclose(coefs.reshape(2, 3, 8, 8)[1, 2], ref, atol=1e-9)


@given(unit_images)
def test_dct_round_trip(img):
    plane = img[0] * 255
    assert np.max(np.abs(block_idct(block_dct(plane)) - plane)) < 1e-10


def test_quality_scaling():
    assert quality_scale(50) == 100 and quality_scale(10) == 500 and quality_scale(90) == 20
    assert np.all(quant_table(LUMA_TABLE, 100) == 1)
    assert np.all(quant_table(CHROMA_TABLE, 1) == 255)
    assert quant_table(LUMA_TABLE, 50)[0, 0] == 16
    with pytest.raises(RangeError):
        quality_scale(0)


def test_color_matrices_are_inverse():
    assert np.allclose(RGB_TO_YCC @ YCC_TO_RGB, np.eye(3), atol=1e-15)
    assert np.allclose(RGB_TO_YCC[0], [0.299, 0.587, 0.114])


def test_jpeg_quality_100_on_gradient():
    img = gradient_image()
    assert psnr(jpeg_sim(img, 100), img) > 45


def test_jpeg_constant_image():
    img = np.full((3, 16, 16), 0.42)
    for q in (10, 60, 100):
        assert np.max(np.abs(jpeg_sim(img, q) - img)) <= 1 / 255


def test_jpeg_pads_and_crops(rng):
    img = rng.uniform(size=(3, 13, 10))
    out = jpeg_sim(img, 80)
    assert out.shape == img.shape and out.min() >= 0 and out.max() <= 1


def test_jpeg_error_non_increasing_in_quality():
    img = synth_face(7, 0, size=64)
    errors = [np.mean((jpeg_sim(img, q) - img) ** 2) for q in (60, 80, 100)]
    assert errors[0] >= errors[1] >= errors[2]


# -- colour jitter ------------------------------------------------------------

def test_jitter_zero_is_identity(rng):
    img = rng.uniform(size=(3, 8, 8))
    out, draws = color_jitter(img, (0, 0, 0), 4)
    assert np.array_equal(out, img) and draws == (0.0, 0.0, 0.0)


def test_brightness_on_constant():
    assert np.allclose(adjust_color(np.full((3, 4, 4), 0.3), brightness=0.2), 0.5)
    assert np.allclose(adjust_color(np.full((3, 4, 4), 0.9), brightness=0.2), 1.0)


def test_jitter_reproducible(rng):
    img = rng.uniform(size=(3, 8, 8))
    a, da = color_jitter(img, (0.2, 0.3, 0.1), 9)
    b, db = color_jitter(img, (0.2, 0.3, 0.1), 9)
    assert np.array_equal(a, b) and da == db
    assert all(abs(d) <= amp for d, amp in zip(da, (0.2, 0.3, 0.1)))


def test_jitter_amplitude_bounds(rng):
    with pytest.raises(ConfigError):
        color_jitter(rng.uniform(size=(3, 4, 4)), (0.6, 0, 0), 1)


# -- full pipeline ------------------------------------------------------------

def test_identity_chain(rng):
    img = gradient_image()
    out = degrade(img, DegradationSpec(sigma=0, r=1, delta=0, q=100), jitter=False).image
    assert psnr(out, img) > 45


def test_r2_halves_dims():
    out = degrade(np.full((3, 33, 32), 0.5), DegradationSpec(sigma=1, r=2, delta=2, q=90)).image
    assert out.shape == (3, 16, 16)  # round(16.5) -> 16 (ties to even)


@given(unit_images, st.floats(0, 3), st.floats(1, 2), st.floats(0, 15), st.integers(1, 100),
       st.tuples(*[st.floats(0, 0.5)] * 3), st.integers(0, 2**32))
def test_stages_stay_in_unit_range(img, sigma, r, delta, q, jitter, seed):
    out = degrade(img, DegradationSpec(sigma, r, delta, q, jitter, seed)).image
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_corpus_determinism():
    imgs = [synth_face(3, i) for i in range(3)]
    ranges = DegradationRanges(r=(1, 3), jitter=(0.1, 0.1, 0.1))

    def corpus():
        return [degrade(im, sample_spec(ranges, 42, i)).image for i, im in enumerate(imgs)]

    for a, b in zip(corpus(), corpus()):
        assert np.array_equal(a, b)


def test_sampled_specs_respect_ranges():
    ranges = DegradationRanges()
    specs = [sample_spec(ranges, 5, i) for i in range(10_000)]
    sig = np.array([s.sigma for s in specs])
    r = np.array([s.r for s in specs])
    dl = np.array([s.delta for s in specs])
    q = np.array([s.q for s in specs])
    assert 0.2 <= sig.min() and sig.max() <= 10
    assert 1 <= r.min() and r.max() <= 8
    assert 0 <= dl.min() and dl.max() <= 15
    assert 60 <= q.min() and q.max() <= 100
    assert q.min() == 60 and q.max() == 100  # both endpoints reachable
    assert abs(sig.mean() - 5.1) < 0.15 and abs(r.mean() - 4.5) < 0.1


def test_spec_validation():
    with pytest.raises(ConfigError):
        DegradationSpec(r=0.5).validate()
    with pytest.raises(ConfigError):
        DegradationSpec(q=0).validate()
    with pytest.raises(ConfigError):
        DegradationSpec(sigma=-1).validate()
