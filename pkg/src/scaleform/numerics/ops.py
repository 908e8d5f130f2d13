"""Differentiable primitives.

Every function takes tensors (or array-likes, which are treated as
constants) and returns a new tensor. Feature maps use NCHW layout.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from scaleform.errors import ShapeError
from scaleform.numerics.tensor import Tensor, as_tensor, make


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from exc


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "div")
    with np.errstate(divide="ignore", invalid="ignore"):  # make() reports non-finite results
        out = a.data / b.data

    def bw(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return make(out, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Matrix product. 2-D operands, or batched with broadcast leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >= 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make(a.data @ b.data, (a, b), bw)


def linear(x, w, b=None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``; ``w`` is (in, out)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {w.shape[0]}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ w.data
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
    out = out.reshape(*lead, w.shape[1])
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        g2 = g.reshape(-1, w.shape[1])
        gx = (g2 @ w.data.T).reshape(x.shape)
        gw = x2.T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make(out, parents, bw)


# ---------------------------------------------------------------------------
# reductions and shape movement


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make(np.asarray(out), (a,), bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]
    basic = _is_basic_index(index)

    def bw(g):
        ga = np.zeros_like(a.data)
        if basic:
            ga[index] = g
        else:
            np.add.at(ga, index, g)
        return (ga,)

    return make(np.array(out, copy=True), (a,), bw)


def take(a, indices, axis: int) -> Tensor:
    """Gather along one axis; repeated indices accumulate in backward."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    out = np.take(a.data, indices, axis=axis)

    def bw(g):
        ga = np.zeros_like(a.data)
        gm = np.moveaxis(ga, axis, 0)
        gg = np.moveaxis(g, axis, 0)
        np.add.at(gm, indices, gg)
        return (ga,)

    return make(out, (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def roll(a, shifts, axes) -> Tensor:
    a = as_tensor(a)
    neg_shifts = tuple(-s for s in shifts)
    return make(np.roll(a.data, shifts, axes), (a,), lambda g: (np.roll(g, neg_shifts, axes),))


def pad_index(n: int, before: int, after: int, mode: str) -> np.ndarray:
    """Source index for each position of a padded axis ('reflect' or 'edge')."""
    pos = np.arange(-before, n + after)
    if mode == "edge":
        return np.clip(pos, 0, n - 1)
    if mode == "reflect":
        if n == 1:
            return np.zeros_like(pos)
        period = 2 * (n - 1)
        pos = np.mod(pos, period)
        return np.where(pos >= n, period - pos, pos)
    raise ValueError(f"unknown pad mode {mode!r}")


def pad2d(x, pads: tuple[int, int, int, int], mode: str = "reflect") -> Tensor:
    """Pad the last two axes by (top, bottom, left, right) using index gathers."""
    top, bottom, left, right = pads
    if not any(pads):
        return as_tensor(x)
    x = as_tensor(x)
    h, w = x.shape[-2:]
    x = take(x, pad_index(h, top, bottom, mode), axis=x.ndim - 2)
    return take(x, pad_index(w, left, right, mode), axis=x.ndim - 1)


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a, approximate: str = "tanh") -> Tensor:
    """GELU; ``approximate="tanh"`` (default) or ``"none"`` for the erf form."""
    a = as_tensor(a)
    x = a.data
    if approximate == "none":
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))

        def bw(g):
            pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
            return (g * (cdf + x * pdf),)

        return make(x * cdf, (a,), bw)
    x2 = x * x
    t = np.tanh(_GELU_C * (x + 0.044715 * x2 * x))

    def bw_tanh(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return make(0.5 * x * (1.0 + t), (a,), bw_tanh)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make(out, (a,), lambda g: (g * (1.0 - out * out),))


def abs(a) -> Tensor:  # noqa: A001
    """Absolute value; the subgradient at zero is 0."""
    a = as_tensor(a)
    sign = np.sign(a.data)
    return make(np.abs(a.data), (a,), lambda g: (g * sign,))


def softmax(a, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Max-stabilised softmax.

    ``mask`` (broadcastable boolean, True = blocked) forces exact zero
    probability without materialising infinite logits.
    """
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(mask, x.shape)
        x = np.where(mask, -np.inf, x)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make(out, (a,), bw)


def layernorm(a, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalise to zero mean / unit variance along ``axis`` (no affine)."""
    a = as_tensor(a)
    x = a.data
    mu = x.mean(axis=axis, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        gm = g.mean(axis=axis, keepdims=True)
        gxm = (g * xhat).mean(axis=axis, keepdims=True)
        return (inv * (g - gm - xhat * gxm),)

    return make(xhat, (a,), bw)


# ---------------------------------------------------------------------------
# spatial ops


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    span = n + 2 * pad - k
    if span < 0 or span % stride:
        raise ShapeError(
            f"conv2d: (size {n} + 2*{pad} - {k}) / {stride} is not a non-negative integer"
        )
    return span // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N*Ho*Wo, C*kh*kw) patch matrix of an already padded input."""
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    out = (cols @ w.reshape(o, -1).T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), cols, (ho, wo)


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding. x: (N,C,H,W), w: (O,C,kh,kw)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D x and w, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {cw}")
    out, cols, (ho, wo) = _conv_forward(x.data, w.data, stride, pad)
    if b is not None:
        b = as_tensor(b)
        out += b.data.reshape(1, o, 1, 1)
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (g2.T @ cols).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            if stride == 1 and kh - 1 - pad >= 0 and kw - 1 - pad >= 0 and kh == kw:
                # full correlation with the flipped, channel-swapped kernel
                wf = np.ascontiguousarray(w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
                gx, _, _ = _conv_forward(g, wf, 1, kh - 1 - pad)
            else:
                gcols = (g2 @ w.data.reshape(o, -1)).reshape(n, ho, wo, c, kh, kw)
                if stride == kh == kw and pad == 0 and ho * kh == h and wo * kw == wd:
                    gx = gcols.transpose(0, 3, 1, 4, 2, 5).reshape(n, c, h, wd)
                else:
                    gxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=g.dtype)
                    for i in range(kh):
                        for j in range(kw):
                            gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                                gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                            )
                    gx = gxp[:, :, pad : pad + h, pad : pad + wd]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return make(out, parents, bw)


def upsample_nearest2x(x) -> Tensor:
    x = as_tensor(x)
    out = x.data.repeat(2, axis=-2).repeat(2, axis=-1)

    def bw(g):
        n, c, h, w = x.shape
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make(out, (x,), bw)


def bilinear_gather(f: np.ndarray, px: np.ndarray, py: np.ndarray):
    """Clamp-to-edge bilinear sampling of ``f[..., H, W]`` at (px, py).

    Returns the sampled array plus the corner indices and weights needed
    for the backward pass. Interpolates along x first, then y.
    """
    h, w = f.shape[-2:]
    xc = np.clip(px, 0.0, w - 1)
    yc = np.clip(py, 0.0, h - 1)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = xc - x0
    wy = yc - y0
    v00 = f[..., y0, x0]
    v01 = f[..., y0, x1]
    v10 = f[..., y1, x0]
    v11 = f[..., y1, x1]
    top = v00 * (1.0 - wx) + v01 * wx
    bot = v10 * (1.0 - wx) + v11 * wx
    out = top * (1.0 - wy) + bot * wy
    return out, (x0, x1, y0, y1, wx, wy, v00, v01, v10, v11)


def grid_sample(f, px, py) -> Tensor:
    """Bilinear sampling of ``f`` (N,C,H,W) at coordinates px, py (Ho,Wo).

    Coordinates are in pixel units (0 = first pixel centre) and shared by
    every batch element and channel. Out-of-range coordinates clamp to the
    border; the coordinate gradient is zero wherever clamping is active.
    """
    f, px, py = as_tensor(f), as_tensor(px), as_tensor(py)
    if px.shape != py.shape or px.ndim != 2:
        raise ShapeError(f"grid_sample: coordinate grids must be equal 2-D, got {px.shape}, {py.shape}")
    n, c, h, w = f.shape
    out, (x0, x1, y0, y1, wx, wy, v00, v01, v10, v11) = bilinear_gather(f.data, px.data, py.data)
    inside_x = (px.data >= 0.0) & (px.data <= w - 1)
    inside_y = (py.data >= 0.0) & (py.data <= h - 1)

    def bw(g):
        ho, wo = px.shape
        gf = None
        if f.requires_grad:
            rows = np.arange(ho * wo).repeat(4)
            cols = np.stack([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1], axis=-1).ravel()
            vals = np.stack(
                [(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy], axis=-1
            ).ravel()
            smat = sp.csr_matrix((vals, (rows, cols)), shape=(ho * wo, h * w))
            gf = np.asarray((smat.T @ g.reshape(n * c, ho * wo).T).T).reshape(f.shape)
        gx = gy = None
        if px.requires_grad:
            dx = (v01 - v00) * (1.0 - wy) + (v11 - v10) * wy
            gx = (g * dx).sum(axis=(0, 1)) * inside_x
        if py.requires_grad:
            top = v00 * (1.0 - wx) + v01 * wx
            bot = v10 * (1.0 - wx) + v11 * wx
            gy = (g * (bot - top)).sum(axis=(0, 1)) * inside_y
        return gf, gx, gy

    return make(out, (f, px, py), bw)
