"""Encoder, bottleneck and decoder assembly of MambaConvBlocks with skip connections."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import ConfigurationError, DimensionError, Tensor
from .blocks import CONV_VARIANTS, BlockConfig, MambaConvBlock
from .nn import Conv2d, ConvTranspose2d, Module
from .ssm import MODES


@dataclass
class ModelConfig:
    input_channels: int = 2
    base_channels: int = 16
    stage_depths: list[int] = field(default_factory=lambda: [2, 2, 2])
    num_stages: int = 3
    bottleneck_depth: int = 2
    grid: int = 64
    state_dim: int = 8
    conv_variant: str = "depthwise_separable"
    gated: bool = False
    # on a single core the step-by-step schedule is the faster of the two
    scan_mode: str = "sequential"

    def validate(self) -> None:
        problems = []
        if self.num_stages < 1:
            problems.append(f"num_stages must be >= 1, got {self.num_stages}")
        if len(self.stage_depths) != self.num_stages:
            problems.append(f"stage_depths has {len(self.stage_depths)} entries for {self.num_stages} stages")
        if any(d < 0 for d in self.stage_depths) or self.bottleneck_depth < 0:
            problems.append("block depths must be non-negative")
        if self.input_channels < 1 or self.base_channels < 1 or self.state_dim < 1:
            problems.append("input_channels, base_channels and state_dim must be positive")
        if self.grid < 1 or self.grid & (self.grid - 1):
            problems.append(f"grid must be a power of two, got {self.grid}")
        elif self.num_stages >= 1 and self.grid >> self.num_stages < 2:
            problems.append(f"grid / 2^num_stages must be >= 2, got {self.grid} / 2^{self.num_stages}")
        if self.conv_variant not in CONV_VARIANTS:
            problems.append(f"conv_variant must be one of {CONV_VARIANTS}")
        if self.scan_mode not in MODES:
            problems.append(f"scan_mode must be one of {MODES}")
        if problems:
            raise ConfigurationError("; ".join(problems))

    def block(self, channels: int) -> BlockConfig:
        return BlockConfig(channels, self.state_dim, self.conv_variant, self.gated, self.scan_mode)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class EncoderStage(Module):
    def __init__(self, width: int, depth: int, cfg: ModelConfig, rng, dtype=None):
        self.blocks = [MambaConvBlock(cfg.block(width), rng, dtype) for _ in range(depth)]
        self.down = Conv2d(width, 2 * width, 3, rng, stride=2, padding=1, dtype=dtype)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        for b in self.blocks:
            x = b(x)
        return x, self.down(x)


class DecoderStage(Module):
    def __init__(self, width: int, depth: int, cfg: ModelConfig, rng, dtype=None):
        self.up = ConvTranspose2d(2 * width, width, rng, dtype=dtype)
        self.fuse = Conv2d(2 * width, width, 1, rng, dtype=dtype)
        self.blocks = [MambaConvBlock(cfg.block(width), rng, dtype) for _ in range(depth)]

    def forward(self, x: Tensor, skip: Tensor) -> Tensor:
        x = self.fuse(ad.concat_channels(self.up(x), skip))
        for b in self.blocks:
            x = b(x)
        return x


class RadioMamba(Module):
    """U-shaped network mapping (B, input_channels, grid, grid) to a (B, 1, grid, grid) map in (0, 1).

    Parameter names follow the attribute tree, e.g. ``encoder.0.blocks.1.mamba.op.ssm.A_log``;
    decoder stage ``i`` works at the resolution of encoder stage ``num_stages - 1 - i``.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=None):
        cfg.validate()
        self.config = cfg
        rng = np.random.default_rng(seed)
        base = cfg.base_channels
        widths = [base * 2 ** s for s in range(cfg.num_stages)]
        self.stem = Conv2d(cfg.input_channels, base, 3, rng, padding=1, dtype=dtype)
        self.encoder = [EncoderStage(w, d, cfg, rng, dtype) for w, d in zip(widths, cfg.stage_depths)]
        bott = base * 2 ** cfg.num_stages
        self.bottleneck = [MambaConvBlock(cfg.block(bott), rng, dtype) for _ in range(cfg.bottleneck_depth)]
        self.decoder = [DecoderStage(w, d, cfg, rng, dtype)
                        for w, d in zip(reversed(widths), reversed(cfg.stage_depths))]
        self.head = Conv2d(base, 1, 1, rng, dtype=dtype)
        self.ablate_skips: set[int] = set()
        self.assign_names()

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.input_channels or x.shape[2:] != (cfg.grid, cfg.grid):
            raise DimensionError(
                f"expected (B, {cfg.input_channels}, {cfg.grid}, {cfg.grid}), got {x.shape}")
        x = self._match_dtype(x)
        x = self.stem(x)
        skips = []
        for s, stage in enumerate(self.encoder):
            skip, x = stage(x)
            if s in self.ablate_skips:
                skip = ad.mul(skip, 0.0)
            skips.append(skip)
        for b in self.bottleneck:
            x = b(x)
        for stage, skip in zip(self.decoder, reversed(skips)):
            x = stage(x, skip)
        return ad.sigmoid(self.head(x))

    def _match_dtype(self, x: Tensor) -> Tensor:
        dtype = self.stem.weight.dtype
        if x.dtype == dtype:
            return x
        if x.requires_grad:
            raise ad.ConfigurationError(f"input dtype {x.dtype} differs from model dtype {dtype}")
        return Tensor(x.data, dtype=dtype)

    def bottleneck_shape(self) -> tuple[int, int, int]:
        cfg = self.config
        side = cfg.grid >> cfg.num_stages
        return cfg.base_channels * 2 ** cfg.num_stages, side, side


def build_model(cfg: ModelConfig, seed: int = 0, dtype=None) -> RadioMamba:
    return RadioMamba(cfg, seed, dtype)


def count_parameters(model: Module) -> tuple[int, dict[str, int]]:
    """Total scalar parameter count and a breakdown keyed by top-level component."""
    breakdown: dict[str, int] = {}
    for name, p in model.named_parameters():
        parts = name.split(".")
        key = ".".join(parts[:2]) if parts[0] in ("encoder", "decoder", "bottleneck") else parts[0]
        breakdown[key] = breakdown.get(key, 0) + p.data.size
    return sum(breakdown.values()), breakdown
