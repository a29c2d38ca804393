"""Parameterized building blocks on top of the functional ops.

``Module`` discovers parameters by scanning instance attributes for
Tensors, child Modules, and lists of Modules, yielding stable dotted
names for checkpointing.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError
from . import functional as F
from .tensor import Tensor


class Module:

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{key}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def load_state(self, state: dict[str, np.ndarray]):
        """Copy arrays into parameters by dotted name; shapes must match."""
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise InvalidArgumentError(
                f"parameter set mismatch: missing={missing[:4]} extra={extra[:4]}")
        for name, tensor in params.items():
            arr = np.asarray(state[name], dtype=tensor.data.dtype)
            if arr.shape != tensor.data.shape:
                raise InvalidArgumentError(
                    f"shape mismatch for {name}: {arr.shape} != {tensor.data.shape}")
            tensor.data = arr.copy()

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}


def _param(rng: np.random.Generator, shape, std: float, dtype) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)


class Conv1d(Module):

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1,
                 padding: int = 0, dilation: int = 1, groups: int = 1,
                 bias: bool = True, init_std: float = 0.01, *,
                 rng: np.random.Generator, dtype=np.float32):
        self.weight = _param(rng, (c_out, c_in // groups, kernel), init_std, dtype)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        self.groups = groups

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding, dilation=self.dilation,
                        groups=self.groups)


class Conv2d(Module):

    def __init__(self, c_in: int, c_out: int, kernel: tuple[int, int],
                 stride: tuple[int, int] = (1, 1), padding: tuple[int, int] = (0, 0),
                 groups: int = 1, bias: bool = True, init_std: float = 0.01, *,
                 rng: np.random.Generator, dtype=np.float32):
        kh, kw = kernel
        self.weight = _param(rng, (c_out, c_in // groups, kh, kw), init_std, dtype)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None
        self.stride = stride
        self.padding = padding
        self.groups = groups

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding, groups=self.groups)


class LayerNorm(Module):

    def __init__(self, channels: int, axis: int = 1, eps: float = 1e-5, *,
                 dtype=np.float32):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.axis = axis
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, axis=self.axis, eps=self.eps)


class GRN(Module):
    """Global response normalization; zero-initialized so it starts as identity."""

    def __init__(self, channels: int, eps: float = 1e-6, channel_axis: int = -1, *,
                 dtype=np.float32):
        self.gamma = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.eps = eps
        self.channel_axis = channel_axis

    def __call__(self, x: Tensor) -> Tensor:
        return F.grn(x, self.gamma, self.beta, eps=self.eps,
                     channel_axis=self.channel_axis)
