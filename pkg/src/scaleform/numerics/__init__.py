"""Minimal tensor algebra with reverse-mode differentiation."""

from scaleform.numerics.ops import (
    abs,
    add,
    concat,
    conv2d,
    div,
    gelu,
    getitem,
    grid_sample,
    layernorm,
    linear,
    matmul,
    mean,
    mul,
    neg,
    pad2d,
    relu,
    reshape,
    roll,
    softmax,
    sub,
    sum,
    take,
    tanh,
    transpose,
    upsample_nearest2x,
)
from scaleform.numerics.tensor import Tensor, as_tensor, backward, no_grad

__all__ = [
    "Tensor",
    "abs",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "conv2d",
    "div",
    "gelu",
    "getitem",
    "grid_sample",
    "layernorm",
    "linear",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "pad2d",
    "relu",
    "reshape",
    "roll",
    "softmax",
    "sub",
    "sum",
    "take",
    "tanh",
    "transpose",
    "upsample_nearest2x",
]
