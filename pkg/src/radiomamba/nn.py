"""Parameter containers and the basic layers built on the autodiff ops."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


class Module:
    """Base class: parameters are discovered by walking instance attributes in order.

    Attributes that are Parameters, Modules, lists of Modules, or objects with a
    ``tensors()`` mapping (e.g. SelectiveParams) all contribute, and their dotted
    attribute path becomes the parameter name.
    """

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
            elif hasattr(value, "tensors") and callable(value.tensors):
                for sub, t in value.tensors().items():
                    if isinstance(t, Parameter):
                        yield f"{name}.{sub}", t

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        seen = set()
        for name, p in self.named_parameters():
            if name in seen:
                raise ValueError(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place (e.g. to float64 for verification)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> Parameter:
    bound = 1.0 / math.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, shape), dtype=dtype)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True, dtype=None):
        dtype = dtype or ad.get_default_dtype()
        self.weight = fan_in_uniform(rng, (n_in, n_out), n_in, dtype)
        self.bias = fan_in_uniform(rng, (n_out,), n_in, dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, stride: int = 1,
                 padding: int = 0, groups: int = 1, bias: bool = True, dtype=None):
        dtype = dtype or ad.get_default_dtype()
        fan_in = (c_in // groups) * kernel * kernel
        self.weight = fan_in_uniform(rng, (c_out, c_in // groups, kernel, kernel), fan_in, dtype)
        self.bias = fan_in_uniform(rng, (c_out,), fan_in, dtype) if bias else None
        self.stride, self.padding, self.groups = stride, padding, groups

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class ConvTranspose2d(Module):
    """Stride-2 upsampling with a 2x2 kernel: exact doubling of H and W."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, kernel: int = 2,
                 bias: bool = True, dtype=None):
        dtype = dtype or ad.get_default_dtype()
        fan_in = c_out * kernel * kernel
        self.weight = fan_in_uniform(rng, (c_in, c_out, kernel, kernel), fan_in, dtype)
        self.bias = fan_in_uniform(rng, (c_out,), fan_in, dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d_transposed(x, self.weight, self.bias, stride=2)


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5, dtype=None):
        dtype = dtype or ad.get_default_dtype()
        self.gain = Parameter(np.ones(channels), dtype=dtype)
        self.bias = Parameter(np.zeros(channels), dtype=dtype)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ad.layernorm(x, self.gain, self.bias, self.eps)
