"""Single-pass inference from a checkpoint."""

from __future__ import annotations

import warnings

import numpy as np

from scaleform import numerics as nx
from scaleform.ffup import MAX_SCALE, ScalePair
from scaleform.harness import checkpoint as ckpt
from scaleform.harness.model import RestorationNet, from_net, to_net
from scaleform.harness.train import TrainConfig

ABLATION_SCALES = (1.5, 2.4, 4.0, 6.0, 8.0)


def load_model(source) -> tuple[RestorationNet, TrainConfig]:
    ck = source if isinstance(source, ckpt.Checkpoint) else ckpt.load(source)
    cfg = TrainConfig.from_dict(ck.meta["train"])
    net = RestorationNet(cfg.model, cfg.seed)
    net.load_state_dict(ck.params)
    return net, cfg


def clamp_scale(scale, lo: float, hi: float) -> ScalePair:
    """Clamp each factor into [lo, hi] (and the global [1, 16]), warning when it moves."""
    if isinstance(scale, ScalePair):
        s_h, s_v = scale.s_h, scale.s_v
    elif np.isscalar(scale):
        s_h = s_v = float(scale)
    else:
        s_h, s_v = (float(s) for s in scale)
    lo, hi = max(1.0, lo), min(MAX_SCALE, hi)
    c_h, c_v = min(max(s_h, lo), hi), min(max(s_v, lo), hi)
    if (c_h, c_v) != (s_h, s_v):
        warnings.warn(f"scale ({s_h}, {s_v}) outside trained range [{lo}, {hi}]; clamped to ({c_h}, {c_v})",
                      stacklevel=3)
    return ScalePair(c_h, c_v)


def restore(model, lq_image: np.ndarray, scale, float32: bool = False) -> np.ndarray:
    """Restore one (3, h, w) image in [0, 1] at the requested scale.

    ``model`` is a checkpoint path, a Checkpoint, or a (net, config) pair
    from :func:`load_model`.
    """
    net, cfg = model if isinstance(model, tuple) else load_model(model)
    scale = clamp_scale(scale, *cfg.scale_range)
    x = to_net(np.asarray(lq_image, dtype=np.float64))[None]
    if float32:
        net.astype(np.float32)
        x = x.astype(np.float32)
    try:
        with nx.no_grad():
            y = net(x, scale)["y_hat"].data[0]
    finally:
        if float32:
            net.astype(np.float64)
    return from_net(y.astype(np.float64))
