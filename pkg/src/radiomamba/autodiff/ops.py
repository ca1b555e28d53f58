"""Differentiable array operations.

Binary ops broadcast only over leading dimensions: the smaller operand's
shape, left-padded with ones, must match the larger one except in a leading
run of ones. That keeps every backward rule a plain sum over leading axes.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import special

from .tensor import DimensionError, Tensor, as_tensor, record

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _broadcast_shape(a: tuple, b: tuple) -> tuple:
    if a == b:
        return a
    long_, short = (a, b) if len(a) >= len(b) else (b, a)
    padded = (1,) * (len(long_) - len(short)) + tuple(short)
    leading = True
    for x, y in zip(long_, padded):
        if x == y and y != 1:
            leading = False
        elif y == 1 and leading:
            continue
        elif x == y:
            continue
        else:
            raise DimensionError(f"shapes {a} and {b} are not leading-broadcast compatible")
    return tuple(long_)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    lead = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if lead:
        grad = grad.sum(axis=lead, keepdims=True)
    return grad


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# -- binary -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a.shape, b.shape)
    return record("add", a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a.shape, b.shape)
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a.shape, b.shape)
    return record("mul", a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a.shape, b.shape)
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return record("div", out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return record("neg", -a.data, (a,), lambda g: (-g,))


# -- unary --------------------------------------------------------------

def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return record("exp", out, (x,), lambda g: (g * out,))


def softplus(x: Tensor) -> Tensor:
    """ln(1 + e^x), switching to the identity for x > 20 to avoid overflow."""
    d = x.data
    out = np.where(d > 20, d, np.log1p(np.exp(np.minimum(d, 20))))
    return record("softplus", out.astype(d.dtype), (x,), lambda g: (g * special.expit(d),))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    d = x.data
    cdf = 0.5 * (1.0 + special.erf(d * _SQRT_HALF))
    out = (d * cdf).astype(d.dtype)

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * d * d)
        return (g * (cdf + d * pdf)).astype(d.dtype),

    return record("gelu", out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    out = special.expit(x.data)
    return record("sigmoid", out, (x,), lambda g: (g * out * (1 - out),))


def silu(x: Tensor) -> Tensor:
    s = special.expit(x.data)
    out = x.data * s
    return record("silu", out, (x,), lambda g: (g * s * (1 + x.data * (1 - s)),))


def absolute(x: Tensor) -> Tensor:
    return record("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def square(x: Tensor) -> Tensor:
    return record("square", x.data * x.data, (x,), lambda g: (2 * g * x.data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return record("sqrt", out, (x,), lambda g: (0.5 * g / out,))


# -- reductions -----------------------------------------------------------

def _expand(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        axes = tuple(a % len(shape) for a in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))
    return record("sum", out, (x,), lambda g: (np.array(_expand(g, x.shape, axis, keepdims)),))


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.asarray(x.data.mean(axis=axis, keepdims=keepdims))
    n = x.size // max(out.size, 1)
    return record("mean", out, (x,),
                  lambda g: (np.array(_expand(g, x.shape, axis, keepdims)) / n,))


# -- shape ----------------------------------------------------------------

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(shape)
    return record("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(x.data.transpose(axes))
    return record("transpose", out, (x,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def flip(x: Tensor, axis: int) -> Tensor:
    out = np.ascontiguousarray(np.flip(x.data, axis))
    return record("flip", out, (x,), lambda g: (np.ascontiguousarray(np.flip(g, axis)),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
                a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)):
            raise DimensionError(f"cannot concatenate shapes {ref} and {t.shape} on axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return record("concat", out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def split(x: Tensor, sizes: Sequence[int], axis: int) -> list[Tensor]:
    if np.sum(sizes) != x.shape[axis]:
        raise DimensionError(f"split sizes {list(sizes)} do not cover extent {x.shape[axis]}")
    bounds = np.cumsum(sizes)[:-1]
    pieces = np.split(x.data, bounds, axis=axis)
    outs = []
    for i, piece in enumerate(pieces):
        def backward(g, i=i):
            full = np.zeros_like(x.data)
            idx = [slice(None)] * x.ndim
            start = 0 if i == 0 else bounds[i - 1]
            idx[axis] = slice(start, start + sizes[i])
            full[tuple(idx)] = g
            return full,
        outs.append(record("split", np.ascontiguousarray(piece), (x,), backward))
    return outs


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two NCHW maps along channels: ``a`` first, then ``b``."""
    if a.ndim != 4 or b.ndim != 4:
        raise DimensionError(f"concat_channels expects NCHW tensors, got {a.shape} and {b.shape}")
    if (a.shape[0], *a.shape[2:]) != (b.shape[0], *b.shape[2:]):
        raise DimensionError(f"batch/spatial mismatch: {a.shape} vs {b.shape}")
    return concat([a, b], axis=1)


def split_channels(x: Tensor, c1: int) -> tuple[Tensor, Tensor]:
    a, b = split(x, [c1, x.shape[1] - c1], axis=1)
    return a, b


def reverse_sequence(x: Tensor) -> Tensor:
    """out[b, k, c] = x[b, L-1-k, c]."""
    if x.ndim != 3:
        raise DimensionError(f"reverse_sequence expects (B, L, C), got {x.shape}")
    return flip(x, 1)


def pad_reflect(x: Tensor, pad: int) -> Tensor:
    """Reflect-pad the two trailing (spatial) axes of an NCHW tensor."""
    if pad == 0:
        return x
    H, W = x.shape[-2:]
    if pad >= min(H, W):
        raise DimensionError(f"reflect padding {pad} too large for {H}x{W}")
    width = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]
    out = np.pad(x.data, width, mode="reflect")

    def backward(g):
        g = g.copy()
        p = pad
        # fold the reflected borders back onto their sources
        g[..., p + 1:2 * p + 1, :] += np.flip(g[..., :p, :], -2)
        g[..., -2 * p - 1:-p - 1, :] += np.flip(g[..., -p:, :], -2)
        g = g[..., p:-p, :]
        g[..., p + 1:2 * p + 1] += np.flip(g[..., :p], -1)
        g[..., -2 * p - 1:-p - 1] += np.flip(g[..., -p:], -1)
        return np.ascontiguousarray(g[..., p:-p]),

    return record("pad_reflect", out, (x,), backward)


# -- layers -----------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y[..., j] = sum_i x[..., i] w[i, j] + b[j]."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise DimensionError(f"linear: bias {b.shape} does not match weight {w.shape}")
    x2 = x.data.reshape(-1, w.shape[0])
    out = x2 @ w.data
    if b is not None:
        out = out + b.data
    out = out.reshape(*x.shape[:-1], w.shape[1])

    def backward(g):
        g2 = g.reshape(-1, w.shape[1])
        gx = (g2 @ w.data.T).reshape(x.shape)
        gw = x2.T @ g2
        gb = g2.sum(axis=0) if b is not None else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return record("linear", out, parents, backward)


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply a per-channel affine map."""
    C = x.shape[-1]
    if C == 0:
        raise DimensionError("layernorm over an empty channel axis")
    if gain.shape != (C,) or bias.shape != (C,):
        raise DimensionError(f"layernorm affine shapes {gain.shape}/{bias.shape} do not match C={C}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead)
        gbias = g.sum(axis=lead)
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, ggain, gbias

    return record("layernorm", out.astype(x.dtype), (x, gain, bias), backward)


ELEMENTWISE = {
    "gelu": gelu,
    "softplus": softplus,
    "exp": exp,
    "add": add,
    "mul": mul,
    "neg": neg,
    "sigmoid": sigmoid,
}


def elementwise(op: str, *args) -> Tensor:
    try:
        fn = ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)
