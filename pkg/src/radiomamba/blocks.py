"""Residual convolution branch, the hybrid Mamba-conv block, and its MAC accounting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ConfigurationError, Tensor
from .nn import Conv2d, Module
from .scan2d import SS2D
from .ssm import DomainError

CONV_VARIANTS = ("depthwise_separable", "standard")


def mac_cost(variant: str, c_in: int, c_out: int, kernel: int, height: int, width: int) -> dict:
    """Multiply-accumulate counts for one KxK layer at stride 1 and 'same' padding.

    ``cost`` is the count for ``variant``: dense for "standard", depthwise plus
    pointwise for "depthwise_separable".
    """
    if variant not in CONV_VARIANTS:
        raise ConfigurationError(f"unknown conv variant {variant!r}")
    for name, v in (("c_in", c_in), ("c_out", c_out), ("kernel", kernel), ("height", height), ("width", width)):
        if v <= 0:
            raise DomainError(f"{name} must be positive, got {v}")
    hw = height * width
    cost_std = hw * c_in * c_out * kernel * kernel
    cost_dw = hw * c_in * kernel * kernel
    cost_pw = hw * c_in * c_out
    return {
        "cost_std": cost_std,
        "cost_dw": cost_dw,
        "cost_pw": cost_pw,
        "ratio": (cost_dw + cost_pw) / cost_std,
        "cost": cost_dw + cost_pw if variant == "depthwise_separable" else cost_std,
    }


class ResidualConvBlock(Module):
    """Y = X + F(X).

    depthwise_separable: F = pointwise(GELU(depthwise3x3(X))).
    standard: F = GELU(conv3x3(X)), one dense conv doing the spatial and channel work.
    """

    def __init__(self, channels: int, rng: np.random.Generator, variant: str = "depthwise_separable",
                 kernel: int = 3, dtype=None):
        if variant not in CONV_VARIANTS:
            raise ConfigurationError(f"unknown conv variant {variant!r}")
        if kernel % 2 == 0:
            raise ConfigurationError("conv branch kernel must be odd")
        self.variant = variant
        self.channels = channels
        pad = kernel // 2
        if variant == "depthwise_separable":
            self.depthwise = Conv2d(channels, channels, kernel, rng, padding=pad, groups=channels, dtype=dtype)
            self.pointwise = Conv2d(channels, channels, 1, rng, dtype=dtype)
        else:
            self.conv = Conv2d(channels, channels, kernel, rng, padding=pad, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ad.DimensionError(f"expected (B, {self.channels}, H, W), got {x.shape}")
        if self.variant == "depthwise_separable":
            f = self.pointwise(ad.gelu(self.depthwise(x)))
        else:
            f = ad.gelu(self.conv(x))
        return ad.add(x, f)


@dataclass
class BlockConfig:
    channels: int
    state_dim: int = 8
    conv_variant: str = "depthwise_separable"
    gated: bool = False
    scan_mode: str = "parallel"
    kernel: int = 3


class MambaConvBlock(Module):
    """Sum of a local residual conv branch and a global SS2D branch on the same input."""

    def __init__(self, cfg: BlockConfig, rng: np.random.Generator, dtype=None):
        self.conv = ResidualConvBlock(cfg.channels, rng, cfg.conv_variant, cfg.kernel, dtype=dtype)
        self.mamba = SS2D(cfg.channels, cfg.state_dim, rng, gated=cfg.gated, scan_mode=cfg.scan_mode, dtype=dtype)
        self.capture: dict | None = None

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ad.DimensionError(f"expected a (B, C, H, W) map, got {x.shape}")
        local = self.conv(x)
        self.mamba.capture = {} if self.capture is not None else None
        glob = self.mamba(x)
        if self.capture is not None:
            self.capture.update(conv=local, mamba=glob, **self.mamba.capture)
        return ad.add(local, glob)
