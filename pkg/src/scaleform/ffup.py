"""Scale-aware fractional feature up-sampling.

Every output pixel is projected back into the low-resolution feature map
with a half-pixel mapping. A small MLP, fed the scale factors and the
sub-pixel projection bias of that pixel, predicts a sampling offset and a
per-channel modulation vector. Features are bilinearly sampled at the
shifted location and refined by a modulated squeeze/expand 1x1 conv pair
added back residually.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from scaleform import numerics as nx
from scaleform.errors import ConfigError
from scaleform.numerics.nn import Conv2d, Linear, Module
from scaleform.numerics.ops import bilinear_gather
from scaleform.numerics.tensor import Tensor

MAX_SCALE = 16.0


@dataclass(frozen=True)
class ScalePair:
    """Horizontal and vertical up-scaling factors (output / input)."""

    s_h: float
    s_v: float

    def __post_init__(self):
        for name, s in (("s_h", self.s_h), ("s_v", self.s_v)):
            if not math.isfinite(s) or s < 1.0 or s > MAX_SCALE:
                raise ConfigError(f"{name}={s} outside [1, {MAX_SCALE}]")

    @classmethod
    def parse(cls, text: str) -> "ScalePair":
        parts = [float(p) for p in str(text).split(",")]
        if len(parts) == 1:
            return cls(parts[0], parts[0])
        if len(parts) == 2:
            return cls(parts[0], parts[1])
        raise ConfigError(f"cannot parse scale {text!r}")

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        """HR raster size; Python's round() gives ties-to-even."""
        return round(self.s_v * h), round(self.s_h * w)


def project(n_out: int, s: float) -> tuple[np.ndarray, np.ndarray]:
    """LR coordinate and relative distance for HR indices 0..n_out-1 on one axis."""
    t = (np.arange(n_out, dtype=np.float64) + 0.5) / s
    prime = t - 0.5
    return prime, prime - np.floor(t)


def periodic_rel(n_out: int, s: float) -> np.ndarray:
    """The relative distance as fmod((x + 0.5), s) / s - 0.5.

    Equal to ``project``'s value up to one rounding, but fmod is exact, so
    for integer s the result repeats bit-for-bit with period s. The
    conditioning MLP reads this form.
    """
    rel = np.fmod(np.arange(n_out, dtype=np.float64) + 0.5, s) / s - 0.5
    literal = project(n_out, s)[1]
    # where floor() in the literal form rounded across an integer, the two differ by a whole wrap
    return np.where(np.abs(rel - literal) > 0.5, literal, rel)


@dataclass(frozen=True)
class SampleGrid:
    """Separable per-pixel projection record.

    ``x_prime``/``rx`` are indexed by output column, ``y_prime``/``ry`` by
    output row; pixel (x, y) owns ``(x_prime[x], y_prime[y], rx[x], ry[y])``.
    """

    x_prime: np.ndarray
    y_prime: np.ndarray
    rx: np.ndarray
    ry: np.ndarray
    scale: ScalePair

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.y_prime), len(self.x_prime)

    def per_pixel(self) -> dict[str, np.ndarray]:
        h, w = self.shape
        return {
            "x_prime": np.broadcast_to(self.x_prime[None, :], (h, w)),
            "y_prime": np.broadcast_to(self.y_prime[:, None], (h, w)),
            "rx": np.broadcast_to(self.rx[None, :], (h, w)),
            "ry": np.broadcast_to(self.ry[:, None], (h, w)),
        }

    def rows(self):
        """Yield (x, y, x_prime, y_prime, rx, ry) in row-major order."""
        for y in range(len(self.y_prime)):
            for x in range(len(self.x_prime)):
                yield x, y, self.x_prime[x], self.y_prime[y], self.rx[x], self.ry[y]


def build_grid(h_out: int, w_out: int, scale: ScalePair) -> SampleGrid:
    if h_out < 1 or w_out < 1:
        raise ConfigError(f"grid size must be positive, got {h_out}x{w_out}")
    x_prime, rx = project(w_out, scale.s_h)
    y_prime, ry = project(h_out, scale.s_v)
    return SampleGrid(x_prime, y_prime, rx, ry, scale)


def resize_bilinear(img: np.ndarray, h_out: int, w_out: int, scale: tuple[float, float] | None = None) -> np.ndarray:
    """Plain bilinear resize of ``img[..., H, W]`` with the half-pixel mapping.

    ``scale`` is (s_h, s_v) as output/input ratios; it defaults to the
    ratio of the raster sizes. Borders clamp to the edge.
    """
    h, w = img.shape[-2:]
    s_h, s_v = scale if scale is not None else (w_out / w, h_out / h)
    px, _ = project(w_out, s_h)
    py, _ = project(h_out, s_v)
    out, _ = bilinear_gather(img, np.broadcast_to(px[None, :], (h_out, w_out)),
                             np.broadcast_to(py[:, None], (h_out, w_out)))
    return out


class FFUP(Module):
    """Learnable parameters of the up-sampler.

    ``conv_ex`` and ``offset_head`` start at zero, so a fresh module is a
    pure bilinear resize; ``scale_head`` starts with unit bias so the
    modulation is initially the identity.
    """

    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        squeeze_ratio: int = 4,
        hidden: int = 64,
        clamp_off: float = 1.0,
        k: int = 2,
    ):
        super().__init__()
        if channels % squeeze_ratio:
            raise ConfigError(f"channels {channels} not divisible by squeeze_ratio {squeeze_ratio}")
        if k < 2:
            raise ConfigError(f"neighbourhood size k must be >= 2, got {k}")
        self.channels = channels
        self.c_mid = channels // squeeze_ratio
        self.clamp_off = clamp_off
        self.k = k
        self.fc1 = Linear(4, hidden, rng)
        self.fc2 = Linear(hidden, hidden, rng)
        self.offset_head = Linear(hidden, 2, rng, zero=True)
        self.scale_head = Linear(hidden, self.c_mid, rng, bias_init=1.0)
        self.scale_head.weight.data *= 0.1
        self.conv_sq = Conv2d(channels, self.c_mid, 1, rng)
        self.conv_ex = Conv2d(self.c_mid, channels, 1, rng, zero=True)
        if k > 2:
            self.reduce = Conv2d(channels * k * k, channels, 1, rng)

    def __call__(self, f_dense, scale: ScalePair):
        return upsample(f_dense, scale, self)


def condition(scale: ScalePair, grid: SampleGrid, params: FFUP) -> tuple[Tensor, Tensor]:
    """Offsets (h, w, 2) and channel weights (h, w, C_mid) for every output pixel.

    The MLP runs once per distinct (s_h, s_v, rx, ry) row and results are
    gathered back, so pixels with equal inputs get bit-identical outputs.
    """
    h, w = grid.shape
    rx = periodic_rel(w, scale.s_h)
    ry = periodic_rel(h, scale.s_v)
    feats = np.stack(
        [np.full((h, w), scale.s_h), np.full((h, w), scale.s_v),
         np.broadcast_to(rx[None, :], (h, w)), np.broadcast_to(ry[:, None], (h, w))], axis=-1
    ).reshape(-1, 4)
    uniq, inverse = np.unique(feats, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    hidden = nx.relu(params.fc2(nx.relu(params.fc1(uniq))))
    offsets = nx.tanh(params.offset_head(hidden)) * params.clamp_off
    weights = params.scale_head(hidden)
    offsets = nx.take(offsets, inverse, axis=0).reshape(h, w, 2)
    weights = nx.take(weights, inverse, axis=0).reshape(h, w, params.c_mid)
    return offsets, weights


def grid_sample(f_dense, grid: SampleGrid, offsets) -> Tensor:
    """Bilinear sample of ``f_dense`` at (x' + dx, y' + dy); offsets is (h, w, 2)."""
    pix = grid.per_pixel()
    offsets = nx.as_tensor(offsets)
    px = nx.add(pix["x_prime"], offsets[:, :, 0])
    py = nx.add(pix["y_prime"], offsets[:, :, 1])
    return nx.grid_sample(f_dense, px, py)


def _sample_neighbourhood(f_dense, grid: SampleGrid, offsets, k: int) -> Tensor:
    taps = np.arange(k) - (k - 1) / 2.0
    stack = []
    for ty in taps:
        for tx in taps:
            stack.append(grid_sample(f_dense, grid, nx.add(offsets, np.array([tx, ty]))))
    return nx.concat(stack, axis=1)


def upsample(f_dense, scale: ScalePair, params: FFUP, return_aux: bool = False):
    """F_up = conv_ex(W_scale * conv_sq(F_sv)) + F_sv on the round(s * size) raster."""
    f_dense = nx.as_tensor(f_dense)
    n, c, h, w = f_dense.shape
    if c != params.channels:
        raise ConfigError(f"feature has {c} channels, up-sampler built for {params.channels}")
    h_out, w_out = scale.output_size(h, w)
    grid = build_grid(h_out, w_out, scale)
    offsets, weights = condition(scale, grid, params)
    if params.k == 2:
        f_sv = grid_sample(f_dense, grid, offsets)
    else:
        f_sv = params.reduce(_sample_neighbourhood(f_dense, grid, offsets, params.k))
    squeezed = params.conv_sq(f_sv)
    modulated = squeezed * nx.transpose(weights, (2, 0, 1)).reshape(1, params.c_mid, h_out, w_out)
    f_up = params.conv_ex(modulated) + f_sv
    if return_aux:
        return f_up, {"grid": grid, "offsets": offsets, "weights": weights, "f_sv": f_sv}
    return f_up
