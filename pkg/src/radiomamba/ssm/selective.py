"""Selective (input-dependent) SSM: parameter projections, per-step ZOH and the scan op."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import DimensionError, NumericError, Parameter, Tensor, record
from . import _kernels
from .static import DomainError, zoh_input_gain

DELTA_INIT = 0.05
CHUNK = 64
MODES = ("sequential", "parallel")


def inverse_softplus(y: float) -> float:
    return math.log(math.expm1(y))


@dataclass
class SelectiveParams:
    """Weights of the selection mechanism for C channels and state size N.

    ``A = -exp(A_log)`` is input independent; ``delta_k = softplus(u_k W_delta + b_delta)``,
    ``B_k = u_k W_B`` and ``C_k = u_k W_C`` are generated per step.
    """

    A_log: Tensor    # (C, N)
    W_delta: Tensor  # (C, C)
    b_delta: Tensor  # (C,)
    W_B: Tensor      # (C, N)
    W_C: Tensor      # (C, N)
    D: Tensor        # (C,)

    @property
    def channels(self) -> int:
        return self.A_log.shape[0]

    @property
    def state_dim(self) -> int:
        return self.A_log.shape[1]

    def A(self) -> Tensor:
        return ad.neg(ad.exp(self.A_log))

    def tensors(self) -> dict[str, Tensor]:
        return {"A_log": self.A_log, "W_delta": self.W_delta, "b_delta": self.b_delta,
                "W_B": self.W_B, "W_C": self.W_C, "D": self.D}

    @classmethod
    def init(cls, channels: int, state_dim: int, rng: np.random.Generator,
             dtype=None) -> "SelectiveParams":
        """A ladder -1..-N per channel, D = 1, delta bias so softplus(bias) = 0.05."""
        dtype = dtype or ad.get_default_dtype()
        bound = 1.0 / math.sqrt(channels)
        ladder = np.tile(np.log(np.arange(1, state_dim + 1, dtype=np.float64)), (channels, 1))
        return cls(
            A_log=Parameter(ladder, dtype=dtype),
            W_delta=Parameter(rng.uniform(-bound, bound, (channels, channels)), dtype=dtype),
            b_delta=Parameter(np.full(channels, inverse_softplus(DELTA_INIT)), dtype=dtype),
            W_B=Parameter(rng.uniform(-bound, bound, (channels, state_dim)), dtype=dtype),
            W_C=Parameter(rng.uniform(-bound, bound, (channels, state_dim)), dtype=dtype),
            D=Parameter(np.ones(channels), dtype=dtype),
        )


def selective_parameters(u: Tensor, p: SelectiveParams) -> tuple[Tensor, Tensor, Tensor]:
    """Per-step (delta, B, C) from ``u`` of shape (B, L, C)."""
    if u.ndim != 3 or u.shape[-1] != p.channels:
        raise DimensionError(f"input {u.shape} does not match {p.channels} channels")
    delta = ad.softplus(ad.linear(u, p.W_delta, p.b_delta))
    return delta, ad.linear(u, p.W_B), ad.linear(u, p.W_C)


def selective_discretize(A, delta, B) -> tuple[np.ndarray, np.ndarray]:
    """Per-step ZOH: A_bar[..., c, n] = exp(delta[..., c] A[c, n]), B_bar = gain * B[..., n].

    ``A`` is (C, N), ``delta`` (..., C), ``B`` (..., N); results are (..., C, N).
    """
    A = np.asarray(A)
    delta = np.asarray(delta)
    if np.any(delta <= 0):
        raise DomainError("every delta_k must be positive")
    dA = delta[..., :, None] * A
    gain = zoh_input_gain(A, delta[..., :, None])
    return np.exp(dA), gain * np.asarray(B)[..., None, :]


def _check(u, delta, A, Bs, Cs, D):
    Bn, L, C = u.shape
    N = A.shape[-1]
    expected = {"delta": (Bn, L, C), "A": (C, N), "B": (Bn, L, N), "C": (Bn, L, N), "D": (C,)}
    for name, t in zip(expected, (delta, A, Bs, Cs, D)):
        if t.shape != expected[name]:
            raise DimensionError(f"selective scan: {name} has shape {t.shape}, expected {expected[name]}")


def selective_scan(u: Tensor, delta: Tensor, A: Tensor, Bs: Tensor, Cs: Tensor, D: Tensor,
                   mode: str = "parallel", chunk: int = CHUNK) -> Tensor:
    """y_k = C_k h_k + D * u_k with h_k = A_bar_k h_{k-1} + B_bar_k u_k, h_0 = 0.

    ``mode="sequential"`` runs the recurrence step by step; ``"parallel"`` uses
    the chunked associative schedule. Both share one reverse-time adjoint.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    _check(u, delta, A, Bs, Cs, D)
    dtype = u.dtype
    arrays = [np.ascontiguousarray(t.data, dtype=dtype) for t in (u, delta, A, Bs, Cs, D)]
    uu, dd, AA, BB, CC, DD = arrays
    K = _kernels.constants(dtype)
    em1 = np.empty((*dd.shape, AA.shape[1]), dtype=dtype)
    _kernels.scaled_rates(dd, AA, em1)
    np.expm1(em1, out=em1)
    hs = np.empty(em1.shape, dtype=dtype)
    y = np.empty(uu.shape, dtype=dtype)
    if mode == "sequential":
        _kernels.forward_sequential(uu, dd, AA, em1, BB, CC, DD, hs, y, K)
    else:
        _kernels.forward_chunked(uu, dd, AA, em1, BB, CC, DD, hs, y, chunk, K)
    if not np.all(np.isfinite(y)):
        b, k = (int(v) for v in np.argwhere(~np.isfinite(y))[0][:2])
        raise NumericError(f"selective scan produced a non-finite value at batch {b}, step {k}")

    def backward(g):
        g = np.ascontiguousarray(g, dtype=dtype)
        gu, gdelta = np.empty_like(uu), np.empty_like(dd)
        gB, gC = np.empty_like(BB), np.empty_like(CC)
        gA, gD = np.zeros_like(AA), np.zeros_like(DD)
        _kernels.backward(g, uu, dd, AA, em1, BB, CC, DD, hs, gu, gdelta, gA, gB, gC, gD, K)
        return gu, gdelta, gA, gB, gC, gD

    return record(f"selective_scan_{mode}", y, (u, delta, A, Bs, Cs, D), backward)


def _scan_with(p: SelectiveParams, u: Tensor, mode: str) -> Tensor:
    delta, Bs, Cs = selective_parameters(u, p)
    return selective_scan(u, delta, p.A(), Bs, Cs, p.D, mode=mode)


def selective_scan_sequential(p: SelectiveParams, u: Tensor) -> Tensor:
    return _scan_with(p, u, "sequential")


def selective_scan_parallel(p: SelectiveParams, u: Tensor) -> Tensor:
    return _scan_with(p, u, "parallel")
