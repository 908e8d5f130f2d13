"""Training losses and full-reference quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from scaleform import numerics as nx
from scaleform.errors import ConfigError, RangeError, ShapeError
from scaleform.ffup import resize_bilinear
from scaleform.numerics.tensor import Tensor

PSNR_CAP = 99.0
PLUGIN_NAMES = ("adv", "comp", "id")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.01
    lambda2: float = 0.1
    lambda_rec: float = 0.1
    lambda_adv: float = 0.1
    lambda_comp: float = 0.1
    lambda_id: float = 1.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if v < 0:
                raise ConfigError(f"loss weight {k} must be >= 0, got {v}")


@dataclass
class LossReport:
    l_up: float
    l_rec: float
    l_adv: float
    l_comp: float
    l_id: float
    l_rest: float
    l_total: float
    graph: Tensor | None = field(default=None, repr=False, compare=False)


def l1(a, b) -> Tensor:
    """Mean absolute difference. The subgradient where a == b is 0."""
    a, b = nx.as_tensor(a), nx.as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"l1: shapes differ {a.shape} vs {b.shape}")
    return nx.mean(nx.abs(a - b))


def match_resolution(y: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Bilinearly resize ground truth to the spatial size of ``shape``."""
    y = np.asarray(y)
    if y.shape[-2:] == tuple(shape[-2:]):
        return y
    return resize_bilinear(y, shape[-2], shape[-1])


def total_loss(
    y_up,
    y_hat,
    y,
    weights: LossWeights = LossWeights(),
    plugins: Mapping[str, Callable] | None = None,
) -> LossReport:
    """Compose the upsampling and restoration losses.

    ``plugins`` may provide ``adv``, ``comp`` and ``id`` callables taking
    (y_hat, y) and returning a scalar; absent ones contribute zero.
    """
    plugins = dict(plugins or {})
    unknown = set(plugins) - set(PLUGIN_NAMES)
    if unknown:
        raise ConfigError(f"unknown loss plugins {sorted(unknown)}")
    y_data = y.data if isinstance(y, Tensor) else np.asarray(y)
    l_up = l1(y_up, match_resolution(y_data, nx.as_tensor(y_up).shape))
    l_rec = l1(y_hat, y_data)
    extra = {}
    for name in PLUGIN_NAMES:
        fn = plugins.get(name)
        extra[name] = nx.as_tensor(fn(y_hat, y) if fn is not None else 0.0)
    l_rest = (
        l_rec * weights.lambda_rec
        + extra["adv"] * weights.lambda_adv
        + extra["comp"] * weights.lambda_comp
        + extra["id"] * weights.lambda_id
    )
    l_total = l_up * weights.lambda1 + l_rest * weights.lambda2
    return LossReport(
        l_up=l_up.item(),
        l_rec=l_rec.item(),
        l_adv=extra["adv"].item(),
        l_comp=extra["comp"].item(),
        l_id=extra["id"].item(),
        l_rest=l_rest.item(),
        l_total=l_total.item(),
        graph=l_total,
    )


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    a, b = _array(a), _array(b)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shapes differ {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3 and img.shape[0] == 3:
        return np.einsum("c,chw->hw", np.array([0.299, 0.587, 0.114]), img)
    if img.ndim == 3 and img.shape[0] == 1:
        return img[0]
    if img.ndim == 2:
        return img
    raise ShapeError(f"ssim expects (H, W), (1, H, W) or (3, H, W), got {img.shape}")


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, peak: float = 1.0, k1: float = 0.01, k2: float = 0.03, window: int = 11,
         sigma: float = 1.5) -> float:
    """Mean SSIM over 'valid' Gaussian-window positions of the luma planes."""
    a, b = _to_gray(_array(a)), _to_gray(_array(b))
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shapes differ {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise RangeError(f"image {a.shape} smaller than the {window}x{window} SSIM window")
    g = _gaussian_window(window, sigma)
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
