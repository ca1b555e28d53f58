"""2-D convolution and its adjoint, NCHW layout.

The kernels are evaluated as a sum over the K*K spatial offsets, each offset
contributing one batched matmul (or a broadcast multiply in the depthwise
case). The transposed convolution *is* the data-gradient of the strided
convolution, so the two share the same three primitives below.
"""

from __future__ import annotations

import numpy as np

from .tensor import ConfigurationError, DimensionError, Tensor, record


def _out_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def _window(xp: np.ndarray, i: int, j: int, stride: int, ho: int, wo: int) -> np.ndarray:
    return xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]


def _is_depthwise(w: np.ndarray, groups: int) -> bool:
    return groups > 1 and w.shape[1] == 1 and w.shape[0] == groups


def _use_im2col(w_shape, groups: int) -> bool:
    # one large GEMM beats K*K small batched ones for dense kernels
    return groups == 1 and w_shape[2] > 1


def _im2col(xp: np.ndarray, K: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Rows indexed by (c_in, i, j), columns by (batch, y, x)."""
    B, cin = xp.shape[:2]
    cols = np.empty((cin, K, K, B, ho, wo), dtype=xp.dtype)
    for i in range(K):
        for j in range(K):
            cols[:, i, j] = _window(xp, i, j, stride, ho, wo).transpose(1, 0, 2, 3)
    return cols.reshape(cin * K * K, B * ho * wo)


def _channels_first(g: np.ndarray) -> np.ndarray:
    return g.transpose(1, 0, 2, 3).reshape(g.shape[1], -1)


def _forward(xp: np.ndarray, w: np.ndarray, stride: int, groups: int, ho: int, wo: int) -> np.ndarray:
    """Correlate the already padded input ``xp`` with ``w``."""
    B = xp.shape[0]
    cout, cin_g, K, _ = w.shape
    if _use_im2col(w.shape, groups):
        out = w.reshape(cout, -1) @ _im2col(xp, K, stride, ho, wo)
        return np.ascontiguousarray(out.reshape(cout, B, ho, wo).transpose(1, 0, 2, 3))
    out = np.zeros((B, cout, ho, wo), dtype=xp.dtype)
    if _is_depthwise(w, groups):
        for i in range(K):
            for j in range(K):
                out += _window(xp, i, j, stride, ho, wo) * w[None, :, 0, i, j, None, None]
        return out
    G = groups
    og = out.reshape(B, G, cout // G, ho * wo)
    wg = w.reshape(G, cout // G, cin_g, K, K)
    for i in range(K):
        for j in range(K):
            xs = _window(xp, i, j, stride, ho, wo).reshape(B, G, cin_g, ho * wo)
            og += np.matmul(wg[..., i, j], xs)
    return out


def _grad_input(g: np.ndarray, w: np.ndarray, stride: int, groups: int, padded_shape) -> np.ndarray:
    """Adjoint of :func:`_forward` with respect to the padded input."""
    B, cout, ho, wo = g.shape
    _, cin_g, K, _ = w.shape
    gx = np.zeros(padded_shape, dtype=g.dtype)
    if _use_im2col(w.shape, groups):
        gcols = (w.reshape(cout, -1).T @ _channels_first(g)).reshape(cin_g, K, K, B, ho, wo)
        for i in range(K):
            for j in range(K):
                _window(gx, i, j, stride, ho, wo)[...] += gcols[:, i, j].transpose(1, 0, 2, 3)
        return gx
    if _is_depthwise(w, groups):
        for i in range(K):
            for j in range(K):
                _window(gx, i, j, stride, ho, wo)[...] += g * w[None, :, 0, i, j, None, None]
        return gx
    G = groups
    gg = g.reshape(B, G, cout // G, ho * wo)
    wt = w.reshape(G, cout // G, cin_g, K, K).swapaxes(1, 2)
    for i in range(K):
        for j in range(K):
            contrib = np.matmul(wt[..., i, j], gg).reshape(B, G * cin_g, ho, wo)
            _window(gx, i, j, stride, ho, wo)[...] += contrib
    return gx


def _grad_weight(g: np.ndarray, xp: np.ndarray, w_shape, stride: int, groups: int) -> np.ndarray:
    B, cout, ho, wo = g.shape
    _, cin_g, K, _ = w_shape
    if _use_im2col(w_shape, groups):
        gw = _channels_first(g) @ _im2col(xp, K, stride, ho, wo).T
        return gw.reshape(w_shape)
    gw = np.zeros(w_shape, dtype=g.dtype)
    if groups > 1 and cin_g == 1 and cout == groups:
        for i in range(K):
            for j in range(K):
                gw[:, 0, i, j] = (g * _window(xp, i, j, stride, ho, wo)).sum(axis=(0, 2, 3))
        return gw
    G = groups
    gg = g.reshape(B, G, cout // G, ho * wo)
    gwg = gw.reshape(G, cout // G, cin_g, K, K)
    for i in range(K):
        for j in range(K):
            xs = _window(xp, i, j, stride, ho, wo).reshape(B, G, cin_g, ho * wo)
            gwg[..., i, j] = np.matmul(gg, xs.swapaxes(-1, -2)).sum(axis=0)
    return gw


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _unpad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.ascontiguousarray(x[:, :, p:-p, p:-p])


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int = 0, groups: int = 1) -> Tensor:
    """Grouped, strided 2-D cross-correlation with zero padding.

    ``w`` has shape (C_out, C_in / groups, K, K). ``groups == C_in == C_out``
    is the depthwise case; ``K == 1`` with ``groups == 1`` the pointwise one.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects NCHW input and OIKK weight, got {x.shape}, {w.shape}")
    B, cin, H, W = x.shape
    cout, cin_g, K, K2 = w.shape
    if K != K2:
        raise ConfigurationError(f"only square kernels are supported, got {K}x{K2}")
    if groups < 1 or cin % groups or cout % groups:
        raise ConfigurationError(f"channels in={cin}, out={cout} not divisible by groups={groups}")
    if cin_g != cin // groups:
        raise DimensionError(f"weight expects {cin_g * groups} input channels, input has {cin}")
    if stride not in (1, 2):
        raise ConfigurationError(f"stride must be 1 or 2, got {stride}")
    ho, wo = _out_size(H, K, stride, padding), _out_size(W, K, stride, padding)
    if ho < 1 or wo < 1:
        raise DimensionError(f"kernel {K} with padding {padding} does not fit a {H}x{W} input")
    if b is not None and b.shape != (cout,):
        raise DimensionError(f"conv2d bias {b.shape} does not match C_out={cout}")

    xp = _pad(x.data, padding)
    out = _forward(xp, w.data, stride, groups, ho, wo)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(g):
        gx = _unpad(_grad_input(g, w.data, stride, groups, xp.shape), padding) if x.requires_grad else None
        gw = _grad_weight(g, xp, w.shape, stride, groups) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return record("conv2d", out, parents, backward)


def conv2d_transposed(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 2,
                      padding: int = 0, output_padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv2d` (same ``stride``/``padding``) producing exactly 2H x 2W.

    ``w`` has shape (C_in, C_out, K, K): the weight of the strided convolution
    that maps C_out channels back down to C_in.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d_transposed expects NCHW input, got {x.shape}, {w.shape}")
    B, cin, H, W = x.shape
    if w.shape[0] != cin:
        raise DimensionError(f"weight expects {w.shape[0]} input channels, input has {cin}")
    _, cout, K, _ = w.shape
    if stride != 2:
        raise ConfigurationError(f"transposed convolution supports stride 2 only, got {stride}")
    if K - 2 * padding + output_padding != stride:
        raise ConfigurationError(
            f"kernel {K}, padding {padding}, output_padding {output_padding} do not double the extent")
    if b is not None and b.shape != (cout,):
        raise DimensionError(f"bias {b.shape} does not match C_out={cout}")
    Ho, Wo = 2 * H, 2 * W
    padded = (B, cout, Ho + 2 * padding, Wo + 2 * padding)
    # rows/cols added by output_padding never receive a contribution: _grad_input
    # only writes the strided windows reachable from the H x W input.
    out = _unpad(_grad_input(x.data, w.data, stride, 1, padded), padding)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(g):
        gp = _pad(g, padding)
        gx = _forward(gp, w.data, stride, 1, H, W) if x.requires_grad else None
        gw = _grad_weight(x.data, gp, w.shape, stride, 1) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return record("conv2d_transposed", out, parents, backward)
