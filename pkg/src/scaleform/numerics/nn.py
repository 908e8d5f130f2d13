"""Parameter containers and a few stock layers built on the primitives."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from scaleform.numerics import ops
from scaleform.numerics.tensor import Tensor


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


class Module:
    """Holds named parameters and child modules.

    Attribute assignment registers tensors that require grad as parameters
    and ``Module`` instances as children, so ``named_parameters`` can walk
    the tree with dotted names.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class Linear(Module):
    """Affine map on the last axis. Weight stored (in, out)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, zero: bool = False, bias_init: float = 0.0):
        super().__init__()
        if zero:
            w = np.zeros((d_in, d_out))
        else:
            w = rng.uniform(-1.0, 1.0, (d_in, d_out)) / math.sqrt(d_in)
        self.weight = parameter(w)
        self.bias = parameter(np.full(d_out, bias_init))

    def __call__(self, x):
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        k: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int | None = None,
        zero: bool = False,
    ):
        super().__init__()
        self.stride = stride
        self.pad = (k - 1) // 2 if pad is None else pad
        if zero:
            w = np.zeros((c_out, c_in, k, k))
        else:
            w = rng.uniform(-1.0, 1.0, (c_out, c_in, k, k)) / math.sqrt(c_in * k * k)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(c_out))

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class LayerNorm(Module):
    """Layer norm with learnable gain/shift along one axis (NCHW: axis=1)."""

    def __init__(self, dim: int, axis: int = -1, eps: float = 1e-5):
        super().__init__()
        self.axis = axis
        self.eps = eps
        self.gain = parameter(np.ones(dim))
        self.shift = parameter(np.zeros(dim))

    def __call__(self, x):
        y = ops.layernorm(x, axis=self.axis, eps=self.eps)
        shape = [1] * y.ndim
        shape[self.axis] = -1
        return y * self.gain.reshape(shape) + self.shift.reshape(shape)
