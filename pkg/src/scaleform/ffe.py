"""Hierarchical shifted-window transformer feature embedding.

Blocks operate on NCHW feature maps. Inside a block the map is moved to
channels-last, split into non-overlapping windows and attended per window;
odd-indexed blocks cyclically shift the map by half a window first and
mask attention between tokens that came from different pre-shift regions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from scaleform import numerics as nx
from scaleform.errors import ConfigError
from scaleform.ffup import project
from scaleform.numerics.nn import Conv2d, LayerNorm, Linear, Module, parameter
from scaleform.numerics.tensor import Tensor


@dataclass
class StbConfig:
    depths: list[int] = field(default_factory=lambda: [2, 4, 6, 2])
    heads: int = 2
    window: int = 4
    dim: int = 32
    shift: bool = True
    mlp_ratio: float = 2.0
    base_size: int = 32

    def __post_init__(self):
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.window < 1 or not self.depths:
            raise ConfigError("window must be >= 1 and depths non-empty")

    @property
    def reduction(self) -> int:
        """Total spatial down-sampling factor from entry to the last stage."""
        return 2 ** (len(self.depths) - 1)


@dataclass
class WindowSet:
    """Windows of shape (N * nW, window**2, C) plus what is needed to undo the split."""

    windows: Tensor
    batch: int
    height: int
    width: int
    padded: tuple[int, int]
    window: int

    @property
    def n_windows(self) -> int:
        ph, pw = self.padded
        return (ph // self.window) * (pw // self.window)

    def with_windows(self, windows: Tensor) -> "WindowSet":
        return WindowSet(windows, self.batch, self.height, self.width, self.padded, self.window)

    def reverse(self) -> Tensor:
        """Reassemble an NCHW map, cropping any padding added by the split."""
        return nx.transpose(_merge_nhwc(self), (0, 3, 1, 2))


def _pad_amount(n: int, window: int) -> int:
    return (-n) % window


def _split_nhwc(x: Tensor, window: int) -> WindowSet:
    n, h, w, c = x.shape
    ph, pw = _pad_amount(h, window), _pad_amount(w, window)
    if ph or pw:
        x = nx.take(x, nx.ops.pad_index(h, 0, ph, "reflect"), axis=1)
        x = nx.take(x, nx.ops.pad_index(w, 0, pw, "reflect"), axis=2)
    hp, wp = h + ph, w + pw
    t = x.reshape(n, hp // window, window, wp // window, window, c)
    t = nx.transpose(t, (0, 1, 3, 2, 4, 5)).reshape(-1, window * window, c)
    return WindowSet(t, n, h, w, (hp, wp), window)


def _merge_nhwc(ws: WindowSet) -> Tensor:
    hp, wp = ws.padded
    win = ws.window
    c = ws.windows.shape[-1]
    t = ws.windows.reshape(ws.batch, hp // win, wp // win, win, win, c)
    t = nx.transpose(t, (0, 1, 3, 2, 4, 5)).reshape(ws.batch, hp, wp, c)
    if (hp, wp) != (ws.height, ws.width):
        t = t[:, : ws.height, : ws.width, :]
    return t


def window_partition(x, window: int) -> WindowSet:
    """Split an NCHW map into window tokens, reflect-padding to a multiple of ``window``."""
    x = nx.as_tensor(x)
    return _split_nhwc(nx.transpose(x, (0, 2, 3, 1)), window)


def relative_position_index(window: int) -> np.ndarray:
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (window - 1)
    return rel[0] * (2 * window - 1) + rel[1]


def shift_mask(hp: int, wp: int, window: int, shift: int) -> np.ndarray:
    """(nW, T, T) boolean mask, True where a token pair straddles a wrap-around seam."""
    labels = np.zeros((hp, wp), dtype=np.int64)
    bounds = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    k = 0
    for hs in bounds:
        for wsl in bounds:
            labels[hs, wsl] = k
            k += 1
    lab = labels.reshape(hp // window, window, wp // window, window).transpose(0, 2, 1, 3)
    lab = lab.reshape(-1, window * window)
    return lab[:, :, None] != lab[:, None, :]


class WindowAttention(Module):
    def __init__(self, dim: int, heads: int, window: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.heads = heads
        self.window = window
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.rel_bias = parameter(rng.normal(0.0, 0.02, ((2 * window - 1) ** 2, heads)))
        self.rel_index = relative_position_index(window)


def window_attention(ws: WindowSet, params: WindowAttention, mask: np.ndarray | None = None,
                     return_attn: bool = False):
    """softmax(Q K^T / sqrt(d) + B) V inside each window, heads concatenated and projected.

    ``mask`` is (nW, T, T) with True marking forbidden pairs.
    """
    x = ws.windows
    bw, t, c = x.shape
    heads = params.heads
    d = c // heads
    qkv = params.qkv(x).reshape(bw, t, 3, heads, d)
    qkv = nx.transpose(qkv, (2, 0, 3, 1, 4))
    q, k, v = qkv[0], qkv[1], qkv[2]
    logits = nx.matmul(q, nx.transpose(k, (0, 1, 3, 2))) * (d ** -0.5)
    bias = nx.take(params.rel_bias, params.rel_index.reshape(-1), axis=0)
    bias = nx.transpose(bias.reshape(t, t, heads), (2, 0, 1))
    logits = logits + bias
    if mask is not None:
        nw = mask.shape[0]
        logits = logits.reshape(bw // nw, nw, heads, t, t)
        attn = nx.softmax(logits, axis=-1, mask=mask[None, :, None]).reshape(bw, heads, t, t)
    else:
        attn = nx.softmax(logits, axis=-1)
    out = nx.matmul(attn, v)
    out = nx.transpose(out, (0, 2, 1, 3)).reshape(bw, t, c)
    result = ws.with_windows(params.proj(out))
    if return_attn:
        return result, attn.data
    return result


class SwinBlock(Module):
    def __init__(self, dim: int, heads: int, window: int, shifted: bool, rng: np.random.Generator,
                 mlp_ratio: float = 2.0):
        super().__init__()
        self.window = window
        self.shifted = shifted
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window, rng)
        self.norm2 = LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x, record: list | None = None):
        return stb_block(x, self, record=record)


def stb_block(x, params: SwinBlock, record: list | None = None) -> Tensor:
    """One residual block: x + W-MSA(LN(x)), then + MLP(LN(.)).

    Shifting is skipped when the map fits in a single window. When
    ``record`` is a list, (attention, mask) pairs are appended to it.
    """
    x = nx.transpose(nx.as_tensor(x), (0, 2, 3, 1))
    n, h, w, c = x.shape
    win = params.window
    shift = win // 2 if params.shifted and (h > win or w > win) else 0
    y = params.norm1(x)
    if shift:
        y = nx.roll(y, (-shift, -shift), (1, 2))
    ws = _split_nhwc(y, win)
    mask = shift_mask(*ws.padded, win, shift) if shift else None
    out = window_attention(ws, params.attn, mask=mask, return_attn=record is not None)
    if record is not None:
        out, attn = out
        record.append((attn, mask))
    y = _merge_nhwc(out)
    if shift:
        y = nx.roll(y, (shift, shift), (1, 2))
    x = x + y
    x = x + params.fc2(nx.gelu(params.fc1(params.norm2(x))))
    return nx.transpose(x, (0, 3, 1, 2))


class Stage(Module):
    def __init__(self, index: int, cfg: StbConfig, rng: np.random.Generator):
        super().__init__()
        if index > 0:
            self.down = Conv2d(cfg.dim, cfg.dim, 2, rng, stride=2, pad=0)
        self.blocks = []
        for j in range(cfg.depths[index]):
            blk = SwinBlock(cfg.dim, cfg.heads, cfg.window, cfg.shift and j % 2 == 1, rng, cfg.mlp_ratio)
            self.add_child(f"block{j}", blk)
            self.blocks.append(blk)

    def __call__(self, x, record=None):
        if "down" in self._children:
            x = self.down(x)
        for blk in self.blocks:
            x = blk(x, record)
        return x


class FFE(Module):
    """Linear embedding + position embedding, staged Swin blocks, trailing 3x3 conv."""

    def __init__(self, in_channels: int, cfg: StbConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.embed = Conv2d(in_channels, cfg.dim, 1, rng)
        self.pos = parameter(rng.normal(0.0, 0.02, (1, cfg.dim, cfg.base_size, cfg.base_size)))
        self.stages = []
        for i in range(len(cfg.depths)):
            self.stages.append(self.add_child(f"stage{i}", Stage(i, cfg, rng)))
        self.final = Conv2d(cfg.dim, cfg.dim, 3, rng)

    def __call__(self, f_up, record=None):
        return extract_semantic(f_up, self, record=record)


def _position_embedding(params: FFE, h: int, w: int) -> Tensor:
    base = params.cfg.base_size
    if (h, w) == (base, base):
        return params.pos
    px, _ = project(w, w / base)
    py, _ = project(h, h / base)
    return nx.grid_sample(params.pos, np.broadcast_to(px[None, :], (h, w)),
                          np.broadcast_to(py[:, None], (h, w)))


def extract_semantic(f_up, params: FFE, record: list | None = None) -> tuple[Tensor, list[Tensor]]:
    """Return (F_semantic, F_spatial) with F_spatial ordered fine to coarse."""
    f_up = nx.as_tensor(f_up)
    n, c, h, w = f_up.shape
    cfg = params.cfg
    red = cfg.reduction
    if h % red or w % red:
        raise ConfigError(f"feature size {h}x{w} not divisible by total reduction {red}")
    if min(h, w) // red < cfg.window:
        raise ConfigError(
            f"feature size {h}x{w} shrinks below window {cfg.window} after {len(cfg.depths)} stages"
        )
    x = params.embed(f_up) + _position_embedding(params, h, w)
    spatial = []
    for stage in params.stages:
        x = stage(x, record)
        spatial.append(x)
    return params.final(x), spatial
