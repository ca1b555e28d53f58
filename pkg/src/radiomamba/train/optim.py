"""AdamW with decoupled weight decay, cosine annealing and global-norm clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..autodiff import NumericError, Parameter
from ..ssm import DomainError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class TrainState:
    """Optimizer step count and per-parameter moments (keyed by parameter name)."""

    total_steps: int
    lr_max: float = 9e-4
    lr_min: float = 1e-6
    weight_decay: float = 1e-4
    seed: int = 0
    step: int = 0
    best_val: float = math.inf
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.step <= self.total_steps:
            raise DomainError(f"step {self.step} outside [0, {self.total_steps}]")

    def moments_for(self, p: Parameter) -> tuple[np.ndarray, np.ndarray]:
        if p.name not in self.m:
            self.m[p.name] = np.zeros_like(p.data)
            self.v[p.name] = np.zeros_like(p.data)
        m, v = self.m[p.name], self.v[p.name]
        if m.shape != p.shape:
            raise DomainError(f"moment shape {m.shape} does not match parameter {p.name} {p.shape}")
        return m, v


def cosine_lr(step: int, total_steps: int, lr_max: float = 9e-4, lr_min: float = 1e-6) -> float:
    if not 0 <= step <= total_steps:
        raise DomainError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; returns the norm before."""
    total = math.sqrt(sum(float(np.sum(np.square(p.grad, dtype=np.float64)))
                          for p in params if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = (p.grad * scale).astype(p.grad.dtype)
    return total


def adamw_step(params: Sequence[Parameter], state: TrainState, lr: float) -> None:
    """One bias-corrected AdamW update; decay acts on the weights, not through the moments."""
    for p in params:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
    state.step += 1
    t = state.step
    c1, c2 = 1.0 - BETA1 ** t, 1.0 - BETA2 ** t
    for p in params:
        m, v = state.moments_for(p)
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        dt = p.data.dtype.type
        m *= dt(BETA1)
        m += dt(1.0 - BETA1) * g
        v *= dt(BETA2)
        v += dt(1.0 - BETA2) * g * g
        update = (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(EPS))
        p.data = (p.data * dt(1.0 - lr * state.weight_decay) - dt(lr) * update).astype(p.data.dtype)
