"""The linear-recurrence monoid and scans over it.

A step ``h -> a * h + b`` is the element ``(a, b)``. Applying ``e1`` then
``e2`` equals applying ``combine(e2, e1) = (a2 * a1, a2 * b1 + b2)``; the
operation is associative with identity ``(1, 0)``, so the prefix states of a
recurrence can be computed by any associative scan schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ScanElement:
    a: np.ndarray  # state multiplier (diagonal)
    b: np.ndarray  # state increment


def identity(n: int, dtype=np.float64) -> ScanElement:
    return ScanElement(np.ones(n, dtype), np.zeros(n, dtype))


def combine(later: ScanElement, earlier: ScanElement) -> ScanElement:
    return ScanElement(later.a * earlier.a, later.a * earlier.b + later.b)


def scan_sequential(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Inclusive prefix states along axis 0, one step at a time (from h = 0)."""
    out = np.empty_like(b)
    h = np.zeros_like(b[0])
    for k in range(a.shape[0]):
        h = a[k] * h + b[k]
        out[k] = h
    return out


def scan_chunked(a: np.ndarray, b: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Same result as :func:`scan_sequential` using a two-level schedule.

    Every chunk is scanned locally from the identity (all chunks advance in
    lock-step, vectorized), chunk totals are scanned across chunks, and each
    chunk's local prefixes are then combined with its incoming carry.
    """
    L = a.shape[0]
    n_chunks = -(-L // chunk)
    pad = n_chunks * chunk - L
    if pad:
        width = [(0, pad)] + [(0, 0)] * (a.ndim - 1)
        a = np.pad(a, width, constant_values=1)
        b = np.pad(b, width)
    a = a.reshape(n_chunks, chunk, *a.shape[1:])
    b = b.reshape(n_chunks, chunk, *b.shape[1:])

    local_a = np.empty_like(a)
    local_b = np.empty_like(b)
    acc_a, acc_b = np.ones_like(a[:, 0]), np.zeros_like(b[:, 0])
    for k in range(chunk):
        acc_a, acc_b = a[:, k] * acc_a, a[:, k] * acc_b + b[:, k]
        local_a[:, k], local_b[:, k] = acc_a, acc_b

    carry = np.zeros_like(b[:, 0])
    h = np.zeros_like(b[0, 0])
    for j in range(n_chunks):
        carry[j] = h
        h = local_a[j, -1] * h + local_b[j, -1]

    out = local_a * carry[:, None] + local_b
    return out.reshape(n_chunks * chunk, *out.shape[2:])[:L]


def scan_doubling(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hillis-Steele recursive doubling: log2(L) fully parallel combine rounds."""
    a, b = a.copy(), b.copy()
    L = a.shape[0]
    step = 1
    while step < L:
        a_prev, b_prev = a[:-step].copy(), b[:-step].copy()
        b[step:] = a[step:] * b_prev + b[step:]
        a[step:] = a[step:] * a_prev
        step *= 2
    return b
