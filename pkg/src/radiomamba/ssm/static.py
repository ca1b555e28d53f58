"""Time-invariant diagonal SSM: zero-order-hold discretization, recurrence and kernel form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import NumericError

TAYLOR_THRESHOLD = 1e-8


class DomainError(ValueError):
    """An argument lies outside the domain of the formula."""


@dataclass
class SsmParams:
    """Continuous-time SSM with diagonal state matrix.

    ``A`` holds the diagonal of the N x N state matrix, ``B`` the N x 1 input
    column, ``C`` the 1 x N readout row and ``D`` the scalar skip.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float
    delta: float

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64).reshape(-1)
        self.B = np.asarray(self.B, dtype=np.float64).reshape(-1)
        self.C = np.asarray(self.C, dtype=np.float64).reshape(-1)
        if not (self.A.shape == self.B.shape == self.C.shape):
            raise ValueError(f"A, B, C sizes differ: {self.A.shape}, {self.B.shape}, {self.C.shape}")
        if np.any(self.A >= 0):
            raise DomainError("diagonal of A must be strictly negative")
        if not self.delta > 0:
            raise DomainError(f"delta must be positive, got {self.delta}")


@dataclass
class DiscreteSsm:
    A_bar: np.ndarray  # diagonal of exp(delta A)
    B_bar: np.ndarray


def zoh_input_gain(A: np.ndarray, delta) -> np.ndarray:
    """Per-entry (exp(delta a) - 1) / a, i.e. the ZOH B-scaling; delta where |delta a| is tiny."""
    A = np.asarray(A)
    x = delta * A
    small = np.abs(x) < TAYLOR_THRESHOLD
    safe_a = np.where(small, 1.0, A)
    gain = np.expm1(x) / safe_a
    return np.where(small, delta * np.ones_like(A), gain)


def discretize_zoh(A, B, delta: float) -> DiscreteSsm:
    """Zero-order hold: A_bar = exp(delta A), B_bar = (delta A)^-1 (exp(delta A) - I) delta B.

    A is diagonal, so the matrix formula reduces to a per-entry scalar one.
    """
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    A = np.asarray(A, dtype=np.float64).reshape(-1)
    B = np.asarray(B, dtype=np.float64).reshape(-1)
    if np.any(A == 0) and np.any(np.abs(delta * A) >= TAYLOR_THRESHOLD):
        raise DomainError("A must have nonzero diagonal entries")
    return DiscreteSsm(A_bar=np.exp(delta * A), B_bar=zoh_input_gain(A, delta) * B)


def ssm_scan_recurrent(d: DiscreteSsm, C, D: float, u, h0=None) -> np.ndarray:
    """h_k = A_bar h_{k-1} + B_bar u_k,  y_k = C h_k + D u_k."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.size < 1:
        raise DomainError("sequence must be non-empty")
    C = np.asarray(C, dtype=np.float64).reshape(-1)
    h = np.zeros_like(d.A_bar) if h0 is None else np.asarray(h0, dtype=np.float64).copy()
    if not np.all(np.isfinite(h)):
        raise NumericError("initial state is not finite")
    y = np.empty_like(u)
    for k, uk in enumerate(u):
        h = d.A_bar * h + d.B_bar * uk
        if not np.all(np.isfinite(h)):
            raise NumericError(f"state became non-finite at step {k}")
        y[k] = C @ h + D * uk
    return y


def ssm_kernel(d: DiscreteSsm, C, L: int) -> np.ndarray:
    """K_k = C A_bar^k B_bar for k = 0..L-1."""
    if L <= 0:
        raise DomainError(f"kernel length must be positive, got {L}")
    C = np.asarray(C, dtype=np.float64).reshape(-1)
    powers = d.A_bar[None, :] ** np.arange(L)[:, None]
    return powers @ (C * d.B_bar)


def ssm_kernel_apply(d: DiscreteSsm, C, u) -> np.ndarray:
    """Zero-initial-state output as the causal convolution y = u * K."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    K = ssm_kernel(d, C, u.size)
    return np.convolve(u, K)[:u.size]
