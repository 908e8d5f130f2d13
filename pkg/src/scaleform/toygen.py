"""Small modulated convolutional decoder standing in for a pretrained face generator.

The semantic feature is pooled and mapped to one latent code per decoder
stage. Each stage doubles resolution (nearest), convolves, applies a
FiLM-style affine modulation from its code and adds a projected skip
feature from the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scaleform import numerics as nx
from scaleform.errors import ConfigError, ShapeError
from scaleform.ffup import project
from scaleform.numerics.nn import Conv2d, Linear, Module, parameter
from scaleform.numerics.tensor import Tensor


@dataclass
class GenConfig:
    stages: int = 4
    channels: int = 32
    latent_dim: int = 64
    hidden: int = 64
    const_size: int = 4
    # False: stage 0 runs at the coarsest skip's resolution without up-sampling,
    # so n stages span a factor 2**(n-1) instead of 2**n.
    first_stage_upsample: bool = True


class GenStage(Module):
    def __init__(self, cfg: GenConfig, skip_channels: int | None, rng: np.random.Generator):
        super().__init__()
        ch = cfg.channels
        self.conv = Conv2d(ch, ch, 3, rng)
        self.affine = Linear(cfg.latent_dim, 2 * ch, rng)
        self.affine.weight.data *= 0.1
        self.affine.bias.data[:ch] = 1.0
        if skip_channels is not None:
            self.skip = Conv2d(skip_channels, ch, 1, rng)


class ToyGenerator(Module):
    def __init__(self, semantic_channels: int, skip_channels: list[int | None], cfg: GenConfig,
                 rng: np.random.Generator):
        super().__init__()
        if len(skip_channels) != cfg.stages:
            raise ConfigError(f"{len(skip_channels)} skip widths for {cfg.stages} stages")
        self.cfg = cfg
        self.map1 = Linear(semantic_channels, cfg.hidden, rng)
        self.map2 = Linear(cfg.hidden, cfg.stages * cfg.latent_dim, rng)
        self.const = parameter(rng.normal(0.0, 1.0, (1, cfg.channels, cfg.const_size, cfg.const_size)))
        self.stages = [self.add_child(f"stage{i}", GenStage(cfg, sc, rng)) for i, sc in enumerate(skip_channels)]
        self.to_rgb = Conv2d(cfg.channels, 3, 1, rng)


def map_latent(f_semantic, params: ToyGenerator) -> list[Tensor]:
    """Global-average-pool, two-layer MLP, split into one (N, L) code per stage."""
    pooled = nx.mean(f_semantic, axis=(2, 3))
    codes = params.map2(nx.relu(params.map1(pooled)))
    L = params.cfg.latent_dim
    return [codes[:, i * L : (i + 1) * L] for i in range(params.cfg.stages)]


def _start(params: ToyGenerator, batch: int, size: tuple[int, int]) -> Tensor:
    const = params.const
    h, w = size
    if (h, w) != const.shape[-2:]:
        px, _ = project(w, w / const.shape[-1])
        py, _ = project(h, h / const.shape[-2])
        const = nx.grid_sample(const, np.broadcast_to(px[None, :], (h, w)),
                               np.broadcast_to(py[:, None], (h, w)))
    return nx.add(const, np.zeros((batch, 1, 1, 1)))


def decode(latent: list[Tensor], f_spatial: list, params: ToyGenerator, base_logits=None) -> Tensor:
    """Decode to an (N, 3, H, W) image in [-1, 1].

    ``f_spatial`` is ordered coarse to fine, one entry per stage; entries
    may be None for stages without a skip. ``base_logits``, if given, is
    added to the RGB projection before the tanh.
    """
    cfg = params.cfg
    if len(latent) != cfg.stages or len(f_spatial) != cfg.stages:
        raise ShapeError(f"need {cfg.stages} codes and skips, got {len(latent)} and {len(f_spatial)}")
    batch = latent[0].shape[0]
    if cfg.first_stage_upsample:
        size = (cfg.const_size, cfg.const_size)
    else:
        if f_spatial[0] is None:
            raise ShapeError("first stage without up-sampling needs a skip to fix its resolution")
        size = f_spatial[0].shape[-2:]
    x = _start(params, batch, size)
    for i, (stage, code, skip) in enumerate(zip(params.stages, latent, f_spatial)):
        if cfg.first_stage_upsample or i > 0:
            x = nx.upsample_nearest2x(x)
        x = stage.conv(x)
        mod = stage.affine(code)
        ch = cfg.channels
        gamma = mod[:, :ch].reshape(batch, ch, 1, 1)
        beta = mod[:, ch:].reshape(batch, ch, 1, 1)
        x = nx.gelu(x * gamma + beta)
        if skip is not None:
            if skip.shape[-2:] != x.shape[-2:]:
                raise ShapeError(f"stage {i}: skip is {skip.shape[-2:]}, stage output {x.shape[-2:]}")
            x = x + stage.skip(skip)
    rgb = params.to_rgb(x)
    if base_logits is not None:
        rgb = rgb + base_logits
    return nx.tanh(rgb)
