"""The full restoration network: dense backbone -> FFUP -> FFE -> toy generator.

Images enter and leave in the network domain [-1, 1]. The generator's
pre-tanh output is added to ``atanh`` of the FFUP RGB projection, so the
decoder learns a correction on top of the up-sampled image.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from scaleform import numerics as nx
from scaleform import rng as rngmod
from scaleform.ffe import FFE, StbConfig, extract_semantic
from scaleform.ffup import FFUP, ScalePair, upsample
from scaleform.numerics.nn import Conv2d, Module
from scaleform.numerics.tensor import Tensor, make
from scaleform.toygen import GenConfig, ToyGenerator, decode, map_latent

SKIP_CLIP = 1.0 - 1e-3


@dataclass
class ModelConfig:
    channels: int = 32
    squeeze_ratio: int = 4
    ffup_hidden: int = 64
    k: int = 2
    clamp_off: float = 1.0
    stb: StbConfig = field(default_factory=StbConfig)
    latent_dim: int = 64
    gen_hidden: int = 64

    def gen_config(self) -> GenConfig:
        return GenConfig(
            stages=len(self.stb.depths),
            channels=self.stb.dim,
            latent_dim=self.latent_dim,
            hidden=self.gen_hidden,
            first_stage_upsample=False,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        stb = StbConfig(**d.pop("stb", {}))
        return cls(stb=stb, **d)


class DenseBackbone(Module):
    """conv_in, then one residual conv pair; the first three channels start as an RGB pass-through."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv_in = Conv2d(3, channels, 3, rng)
        self.conv_in.weight.data[:3] = 0.0
        for c in range(3):
            self.conv_in.weight.data[c, c, 1, 1] = 1.0
        self.conv_a = Conv2d(channels, channels, 3, rng)
        self.conv_b = Conv2d(channels, channels, 3, rng, zero=True)

    def __call__(self, x):
        h = self.conv_in(x)
        return h + self.conv_b(nx.gelu(self.conv_a(h)))


class RestorationNet(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = rngmod.stream(seed, "init")
        self.dense = DenseBackbone(cfg.channels, rng)
        self.ffup = FFUP(cfg.channels, rng, squeeze_ratio=cfg.squeeze_ratio, hidden=cfg.ffup_hidden,
                         clamp_off=cfg.clamp_off, k=cfg.k)
        self.rgb_head = Conv2d(cfg.channels, 3, 1, rng, zero=True)
        for c in range(3):
            self.rgb_head.weight.data[c, c, 0, 0] = 1.0
        self.ffe = FFE(cfg.channels, cfg.stb, rng)
        self.gen = ToyGenerator(cfg.stb.dim, [cfg.stb.dim] * len(cfg.stb.depths), cfg.gen_config(), rng)

    @property
    def pad_multiple(self) -> int:
        return self.cfg.stb.reduction

    @property
    def min_size(self) -> int:
        return self.cfg.stb.reduction * self.cfg.stb.window

    def forward(self, lq, scale: ScalePair) -> dict[str, Tensor]:
        """Return ``y_up`` (FFUP RGB projection) and ``y_hat`` (restored image)."""
        f_dense = self.dense(lq)
        f_up = upsample(f_dense, scale, self.ffup)
        y_up = self.rgb_head(f_up)
        ho, wo = f_up.shape[-2:]
        m = self.pad_multiple
        th = max(self.min_size, -(-ho // m) * m)
        tw = max(self.min_size, -(-wo // m) * m)
        f_in = nx.pad2d(f_up, (0, th - ho, 0, tw - wo), mode="edge")
        semantic, spatial = extract_semantic(f_in, self.ffe)
        latent = map_latent(semantic, self.gen)
        base = nx.pad2d(y_up, (0, th - ho, 0, tw - wo), mode="edge")
        y_hat = decode(latent, spatial[::-1], self.gen, base_logits=_atanh_clipped(base))
        if (th, tw) != (ho, wo):
            y_hat = y_hat[:, :, :ho, :wo]
        return {"y_up": y_up, "y_hat": y_hat, "f_up": f_up}

    __call__ = forward


def _atanh_clipped(x: Tensor) -> Tensor:
    data = x.data
    clipped = np.clip(data, -SKIP_CLIP, SKIP_CLIP)
    inside = (data > -SKIP_CLIP) & (data < SKIP_CLIP)
    out = np.arctanh(clipped)
    return make(out, (x,), lambda g: (g * inside / (1.0 - clipped * clipped),))


def identity_model(cfg: ModelConfig, seed: int = 0) -> RestorationNet:
    """A network whose scale-(1,1) output reproduces its input up to the skip clip."""
    net = RestorationNet(cfg, seed)
    net.gen.to_rgb.weight.data[:] = 0.0
    net.gen.to_rgb.bias.data[:] = 0.0
    return net


def to_net(img: np.ndarray) -> np.ndarray:
    return img * 2.0 - 1.0


def from_net(x: np.ndarray) -> np.ndarray:
    return np.clip((x + 1.0) * 0.5, 0.0, 1.0)
