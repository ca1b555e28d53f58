"""Compiled inner loops of the selective scan.

Layouts: ``u, delta`` (B, L, C); ``A`` (C, N); ``Bs, Cs`` (B, L, N);
``em1 = expm1(delta * A)`` (B, L, C, N); states ``hs`` (B, L, C, N).
The per-step discrete matrices are A_bar = 1 + em1 and
B_bar = (em1 / a) * B_k, or delta * B_k under the Taylor guard.

Scalar constants arrive in ``K`` (see :func:`constants`) so that every
expression stays in the working dtype; a float64 literal would silently
promote float32 arithmetic and defeat vectorization. ``nnan``/``ninf`` are
deliberately left out of the fastmath set so non-finite values still propagate
to the caller's check.
"""

from __future__ import annotations

import numba as nb
import numpy as np

TAYLOR = 1e-8
_SERIES = 1e-3
_FASTMATH = {"reassoc", "contract", "arcp"}


def constants(dtype) -> np.ndarray:
    return np.array([1.0, TAYLOR, _SERIES, 0.5, 1.0 / 3.0, 0.125], dtype=dtype)


@nb.njit(cache=True, nogil=True, fastmath=_FASTMATH)
def scaled_rates(delta, A, out):
    """out[b, k, c, n] = delta[b, k, c] * A[c, n]."""
    Bn, L, C = delta.shape
    N = A.shape[1]
    for b in range(Bn):
        for k in range(L):
            for c in range(C):
                d = delta[b, k, c]
                for n in range(N):
                    out[b, k, c, n] = d * A[c, n]


@nb.njit(cache=True, nogil=True, fastmath=_FASTMATH)
def forward_sequential(u, delta, A, em1, Bs, Cs, D, hs, y, K):
    one, tay = K[0], K[1]
    Bn, L, C = u.shape
    N = A.shape[1]
    inv = one / A
    h = np.zeros((C, N), dtype=hs.dtype)
    for b in range(Bn):
        h[:] = 0
        for k in range(L):
            for c in range(C):
                d = delta[b, k, c]
                uu = u[b, k, c]
                acc = D[c] * uu
                for n in range(N):
                    e = em1[b, k, c, n]
                    gain = d if abs(d * A[c, n]) < tay else e * inv[c, n]
                    hv = (one + e) * h[c, n] + gain * Bs[b, k, n] * uu
                    h[c, n] = hv
                    hs[b, k, c, n] = hv
                    acc += Cs[b, k, n] * hv
                y[b, k, c] = acc


@nb.njit(cache=True, nogil=True, fastmath=_FASTMATH)
def forward_chunked(u, delta, A, em1, Bs, Cs, D, hs, y, chunk, K):
    """Chunk-local scans from the identity, a carry scan over chunk totals, then fix-up."""
    one, tay = K[0], K[1]
    Bn, L, C = u.shape
    N = A.shape[1]
    inv = one / A
    n_chunks = (L + chunk - 1) // chunk
    tot_a = np.empty((n_chunks, C, N), dtype=hs.dtype)
    carry = np.zeros((n_chunks, C, N), dtype=hs.dtype)
    pa = np.empty((C, N), dtype=hs.dtype)
    pb = np.empty((C, N), dtype=hs.dtype)
    for b in range(Bn):
        # every chunk is independent here
        for j in range(n_chunks):
            k0 = j * chunk
            k1 = min(L, k0 + chunk)
            pa[:] = 1
            pb[:] = 0
            for k in range(k0, k1):
                for c in range(C):
                    d = delta[b, k, c]
                    uu = u[b, k, c]
                    for n in range(N):
                        e = em1[b, k, c, n]
                        gain = d if abs(d * A[c, n]) < tay else e * inv[c, n]
                        ak = one + e
                        v = ak * pb[c, n] + gain * Bs[b, k, n] * uu
                        pb[c, n] = v
                        pa[c, n] = ak * pa[c, n]
                        hs[b, k, c, n] = v
            tot_a[j] = pa
        # carry scan across chunk totals (the chunk's last local state is its b total)
        for j in range(1, n_chunks):
            last = j * chunk - 1
            for c in range(C):
                for n in range(N):
                    carry[j, c, n] = tot_a[j - 1, c, n] * carry[j - 1, c, n] + hs[b, last, c, n]
        # every chunk is independent again
        for j in range(n_chunks):
            k0 = j * chunk
            k1 = min(L, k0 + chunk)
            pa[:] = carry[j]
            for k in range(k0, k1):
                for c in range(C):
                    acc = D[c] * u[b, k, c]
                    for n in range(N):
                        v = pa[c, n] * (one + em1[b, k, c, n])
                        pa[c, n] = v
                        hv = hs[b, k, c, n] + v
                        hs[b, k, c, n] = hv
                        acc += Cs[b, k, n] * hv
                    y[b, k, c] = acc


@nb.njit(cache=True, nogil=True, fastmath=_FASTMATH)
def _adjoint(gy, em1, Cs, G, K):
    """Reverse-time adjoint: G_k = C_k g_y(k) + A_bar(k+1) G_{k+1}."""
    one = K[0]
    Bn, L, C, N = em1.shape
    gh = np.zeros((C, N), dtype=G.dtype)
    for b in range(Bn):
        gh[:] = 0
        for k in range(L - 1, -1, -1):
            for c in range(C):
                g = gy[b, k, c]
                for n in range(N):
                    v = gh[c, n] + g * Cs[b, k, n]
                    G[b, k, c, n] = v
                    gh[c, n] = v * (one + em1[b, k, c, n])


@nb.njit(cache=True, nogil=True, fastmath=_FASTMATH)
def _local_grads(gy, u, delta, A, em1, Bs, D, hs, G, gu, gdelta, gA, gB, gC, gD, K):
    """Every gradient that is local to one step once the adjoint G is known."""
    one, tay, ser, half, third, eighth = K[0], K[1], K[2], K[3], K[4], K[5]
    zero = one - one
    Bn, L, C = u.shape
    N = A.shape[1]
    inv = one / A
    zrow = np.zeros((C, N), dtype=G.dtype)
    gAl = np.zeros((C, N), dtype=G.dtype)
    gDl = np.zeros(C, dtype=G.dtype)
    accB = np.zeros(N, dtype=G.dtype)
    accC = np.zeros(N, dtype=G.dtype)
    for b in range(Bn):
        for k in range(L):
            hp = hs[b, k - 1] if k > 0 else zrow
            accB[:] = 0
            accC[:] = 0
            for c in range(C):
                g = gy[b, k, c]
                d = delta[b, k, c]
                uu = u[b, k, c]
                gDl[c] += g * uu
                gu_acc = g * D[c]
                gd_acc = zero
                for n in range(N):
                    v = G[b, k, c, n]
                    a = A[c, n]
                    e = em1[b, k, c, n]
                    ea = one + e
                    x = d * a
                    ia = inv[c, n]
                    gain = d if abs(x) < tay else e * ia
                    # d(gain)/da, with a short series where the closed form cancels
                    dga = d * d * (half + x * third + x * x * eighth) if abs(x) < ser else (x * ea - e) * ia * ia
                    Bk = Bs[b, k, n]
                    g_ea = v * hp[c, n] * ea
                    g_gain = v * Bk * uu
                    gd_acc += g_ea * a + g_gain * ea
                    gAl[c, n] += g_ea * d + g_gain * dga
                    gu_acc += v * gain * Bk
                    accB[n] += v * gain * uu
                    accC[n] += g * hs[b, k, c, n]
                gu[b, k, c] = gu_acc
                gdelta[b, k, c] = gd_acc
            gB[b, k] = accB
            gC[b, k] = accC
    gA += gAl
    gD += gDl


def backward(gy, u, delta, A, em1, Bs, Cs, D, hs, gu, gdelta, gA, gB, gC, gD, K):
    """Fill the gradient buffers; ``gA`` and ``gD`` are accumulated into."""
    G = np.empty_like(hs)
    _adjoint(gy, em1, Cs, G, K)
    _local_grads(gy, u, delta, A, em1, Bs, D, hs, G, gu, gdelta, gA, gB, gC, gD, K)
