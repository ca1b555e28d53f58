"""SS2D: run the 1-D selective scan over a 2-D feature map in both raster directions."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .nn import LayerNorm, Linear, Module
from .ssm import SelectiveParams, selective_parameters, selective_scan


def raster_flatten(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, H*W, C) with sequence index k = i*W + j."""
    if x.ndim != 4:
        raise DimensionError(f"expected a (B, C, H, W) map, got {x.shape}")
    B, C, H, W = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 3, 1)), (B, H * W, C))


def raster_unflatten(seq: Tensor, height: int, width: int) -> Tensor:
    """Inverse of :func:`raster_flatten`."""
    if seq.ndim != 3:
        raise DimensionError(f"expected a (B, L, C) sequence, got {seq.shape}")
    B, L, C = seq.shape
    if L != height * width:
        raise DimensionError(f"sequence length {L} does not match {height}x{width}")
    return ad.transpose(ad.reshape(seq, (B, height, width, C)), (0, 3, 1, 2))


class MambaOperator(Module):
    """Input projection, selective scan with state size N, output projection (all C -> C).

    With ``gated=True`` the input projection also produces a SiLU gate that
    multiplies the scan output before the output projection.
    """

    def __init__(self, channels: int, state_dim: int, rng: np.random.Generator,
                 gated: bool = False, scan_mode: str = "parallel", dtype=None):
        self.in_proj = Linear(channels, 2 * channels if gated else channels, rng, dtype=dtype)
        self.ssm = SelectiveParams.init(channels, state_dim, rng, dtype=dtype)
        self.out_proj = Linear(channels, channels, rng, dtype=dtype)
        self.gated = gated
        self.scan_mode = scan_mode
        self.channels = channels

    def forward(self, x: Tensor) -> Tensor:
        u = self.in_proj(x)
        if self.gated:
            u, z = ad.split(u, [self.channels, self.channels], axis=-1)
        delta, Bs, Cs = selective_parameters(u, self.ssm)
        y = selective_scan(u, delta, self.ssm.A(), Bs, Cs, self.ssm.D, mode=self.scan_mode)
        if self.gated:
            y = ad.mul(y, ad.silu(z))
        return self.out_proj(y)


def ss2d_forward(x: Tensor, operator: Callable[[Tensor], Tensor], norm: LayerNorm,
                 capture: dict | None = None) -> Tensor:
    """y = M(s) + R(M(R(s))) with s = flatten(LayerNorm(x)), reshaped back to x's shape.

    LayerNorm acts per spatial position over channels, so it is applied after
    flattening. Both directions share ``operator`` and run as one stacked batch.
    """
    B, C, H, W = x.shape
    if C != norm.gain.shape[0]:
        raise DimensionError(f"input has {C} channels, SS2D expects {norm.gain.shape[0]}")
    seq = norm(raster_flatten(x))
    both = operator(ad.concat([seq, ad.reverse_sequence(seq)], axis=0))
    y_fwd, y_rev = ad.split(both, [B, B], axis=0)
    y_bwd = ad.reverse_sequence(y_rev)
    if capture is not None:
        capture["seq"] = seq
        capture["forward"] = y_fwd
        capture["backward"] = y_bwd
    return raster_unflatten(ad.add(y_fwd, y_bwd), H, W)


class SS2D(Module):
    def __init__(self, channels: int, state_dim: int, rng: np.random.Generator,
                 gated: bool = False, scan_mode: str = "parallel", dtype=None):
        self.norm = LayerNorm(channels, dtype=dtype)
        self.op = MambaOperator(channels, state_dim, rng, gated=gated, scan_mode=scan_mode, dtype=dtype)
        self.capture: dict | None = None

    def forward(self, x: Tensor) -> Tensor:
        return ss2d_forward(x, self.op, self.norm, self.capture)
