"""Synthetic low-quality image generation.

Images are float arrays of shape (3, H, W) in [0, 1]. The pipeline is
blur -> downsample -> additive Gaussian noise -> JPEG -> optional colour
jitter, with every random draw taken from a stream keyed by the spec seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from scaleform import rng as rngmod
from scaleform.errors import ConfigError, RangeError
from scaleform.ffup import resize_bilinear
from scaleform.jpeg import jpeg_sim

MIN_LQ_SIZE = 8
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class DegradationSpec:
    sigma: float = 0.0
    r: float = 1.0
    delta: float = 0.0
    q: int = 100
    jitter: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0

    def validate(self) -> "DegradationSpec":
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.r < 1:
            raise ConfigError(f"downsample factor must be >= 1, got {self.r}")
        if self.delta < 0:
            raise ConfigError(f"noise level must be >= 0, got {self.delta}")
        if not 1 <= int(self.q) <= 100:
            raise ConfigError(f"JPEG quality must be in [1, 100], got {self.q}")
        if any(not 0.0 <= a <= 0.5 for a in self.jitter):
            raise ConfigError(f"jitter amplitudes must lie in [0, 0.5], got {self.jitter}")
        return self


@dataclass
class DegradationRanges:
    """Sampling intervals; the defaults are the usual blind face restoration training ranges."""

    sigma: tuple[float, float] = (0.2, 10.0)
    r: tuple[float, float] = (1.0, 8.0)
    delta: tuple[float, float] = (0.0, 15.0)
    q: tuple[int, int] = (60, 100)
    jitter: tuple[float, float, float] = (0.0, 0.0, 0.0)


def sample_spec(ranges: DegradationRanges, seed: int, *index: int) -> DegradationSpec:
    g = rngmod.stream(seed, "spec", *index)
    return DegradationSpec(
        sigma=float(g.uniform(*ranges.sigma)),
        r=float(g.uniform(*ranges.r)),
        delta=float(g.uniform(*ranges.delta)),
        q=int(g.integers(ranges.q[0], ranges.q[1], endpoint=True)),
        jitter=tuple(ranges.jitter),
        seed=int(g.integers(0, 2**63 - 1)),
    )


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect padding; sigma < 0.05 is a no-op."""
    img = np.asarray(img, dtype=np.float64)
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if sigma < 0.05:
        return img.copy()
    k = gaussian_kernel(sigma)
    rad = len(k) // 2
    out = img
    for axis in (-2, -1):
        pad = [(0, 0)] * img.ndim
        pad[axis] = (rad, rad)
        padded = np.pad(out, pad, mode="reflect")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for i, weight in enumerate(k):
            acc += weight * np.take(padded, np.arange(i, i + n), axis=axis)
        out = acc
    return out


def downsample(img, r: float) -> np.ndarray:
    """Bilinear resize by 1/r to (round(H/r), round(W/r))."""
    img = np.asarray(img, dtype=np.float64)
    if r < 1:
        raise ConfigError(f"downsample factor must be >= 1, got {r}")
    if r == 1:
        return img.copy()
    h, w = img.shape[-2:]
    h_out, w_out = round(h / r), round(w / r)
    if h_out < MIN_LQ_SIZE or w_out < MIN_LQ_SIZE:
        raise RangeError(f"downsampling {h}x{w} by {r} gives {h_out}x{w_out} < {MIN_LQ_SIZE}x{MIN_LQ_SIZE}")
    return resize_bilinear(img, h_out, w_out, scale=(1.0 / r, 1.0 / r))


def noise_field(shape, delta: float, seed: int) -> np.ndarray:
    return rngmod.stream(seed, "awgn").standard_normal(shape) * (delta / 255.0)


def awgn(img, delta: float, seed: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if delta < 0:
        raise ConfigError(f"noise level must be >= 0, got {delta}")
    if delta == 0:
        return img.copy()
    return np.clip(img + noise_field(img.shape, delta, seed), 0.0, 1.0)


def adjust_color(img, brightness: float = 0.0, contrast: float = 0.0, saturation: float = 0.0) -> np.ndarray:
    """Add brightness, scale about the mean by (1 + contrast), blend away from luma by (1 + saturation)."""
    out = np.asarray(img, dtype=np.float64)
    if brightness:
        out = np.clip(out + brightness, 0.0, 1.0)
    if contrast:
        m = out.mean()
        out = np.clip((out - m) * (1.0 + contrast) + m, 0.0, 1.0)
    if saturation:
        gray = np.einsum("c,chw->hw", LUMA, out)[None]
        out = np.clip(gray + (out - gray) * (1.0 + saturation), 0.0, 1.0)
    return out if out is not img else out.copy()


def color_jitter(img, amplitudes, seed: int) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Random brightness/contrast/saturation; returns the image and the realised draws."""
    amplitudes = tuple(float(a) for a in amplitudes)
    if any(not 0.0 <= a <= 0.5 for a in amplitudes):
        raise ConfigError(f"jitter amplitudes must lie in [0, 0.5], got {amplitudes}")
    g = rngmod.stream(seed, "jitter")
    draws = tuple(float(g.uniform(-a, a)) if a > 0 else 0.0 for a in amplitudes)
    return adjust_color(img, *draws), draws


@dataclass
class Degraded:
    image: np.ndarray
    spec: DegradationSpec
    jitter_draws: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    def manifest_fields(self) -> dict:
        d = asdict(self.spec)
        d["jitter_draws"] = self.jitter_draws
        return d


def degrade(img, spec: DegradationSpec, jitter: bool = True) -> Degraded:
    spec.validate()
    out = gaussian_blur(img, spec.sigma)
    out = downsample(out, spec.r)
    out = awgn(out, spec.delta, spec.seed)
    out = jpeg_sim(out, int(spec.q))
    draws = (0.0, 0.0, 0.0)
    if jitter and any(spec.jitter):
        out, draws = color_jitter(out, spec.jitter, spec.seed)
    return Degraded(out, spec, draws)
