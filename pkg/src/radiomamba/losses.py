"""Composite training loss (L1, MSE, SSIM, Sobel-gradient) and evaluation metrics.

NMSE is sum((pred - target)^2) / sum(target^2): normalised by the target, so it
is deliberately asymmetric. RMSE and PSNR are on the normalised [0, 1] scale.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .ssm import DomainError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP = 99.0

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


@dataclass(frozen=True)
class LossWeights:
    l1: float = 0.4
    mse: float = 0.1
    ssim: float = 0.2
    grad: float = 0.3

    def __post_init__(self):
        if any(w < 0 for w in astuple(self)):
            raise DomainError(f"loss weights must be non-negative, got {astuple(self)}")

    @classmethod
    def l1_mse_only(cls) -> "LossWeights":
        return cls(0.5, 0.5, 0.0, 0.0)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _as_maps(x: Tensor) -> Tensor:
    """(B, C, H, W) or (H, W) -> (B*C, 1, H, W)."""
    if x.ndim == 2:
        return ad.reshape(x, (1, 1, *x.shape))
    if x.ndim != 4:
        raise DimensionError(f"expected a (B, C, H, W) or (H, W) map, got {x.shape}")
    B, C, H, W = x.shape
    return x if C == 1 else ad.reshape(x, (B * C, 1, H, W))


def _check_pair(pred: Tensor, target: Tensor) -> None:
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ in shape")


def ssim_tensor(a: Tensor, b: Tensor) -> Tensor:
    """Differentiable mean SSIM over all valid 11x11 windows, dynamic range 1."""
    _check_pair(a, b)
    a, b = _as_maps(a), _as_maps(b)
    n, _, H, W = a.shape
    if H < SSIM_WINDOW or W < SSIM_WINDOW:
        raise DomainError(f"SSIM needs maps of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {H}x{W}")
    window = Tensor(gaussian_window()[None, None], dtype=a.dtype)
    # all five local statistics through a single convolution
    stack = ad.concat([a, b, ad.mul(a, a), ad.mul(b, b), ad.mul(a, b)], axis=0)
    mu_a, mu_b, e_aa, e_bb, e_ab = ad.split(ad.conv2d(stack, window), [n] * 5, axis=0)
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    mu_ab = ad.mul(mu_a, mu_b)
    mu_aa, mu_bb = ad.mul(mu_a, mu_a), ad.mul(mu_b, mu_b)
    var_a, var_b, cov = ad.sub(e_aa, mu_aa), ad.sub(e_bb, mu_bb), ad.sub(e_ab, mu_ab)
    num = ad.mul(ad.add(ad.mul(mu_ab, 2.0), c1), ad.add(ad.mul(cov, 2.0), c2))
    den = ad.mul(ad.add(ad.add(mu_aa, mu_bb), c1), ad.add(ad.add(var_a, var_b), c2))
    return ad.mean(ad.div(num, den))


def sobel(x: Tensor) -> Tensor:
    """Sobel-x and Sobel-y responses with reflect padding: (N, 1, H, W) -> (N, 2, H, W)."""
    kernels = np.stack([_SOBEL_X, _SOBEL_X.T])[:, None]
    return ad.conv2d(ad.pad_reflect(x, 1), Tensor(kernels, dtype=x.dtype))


def sobel_gradient_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean |sobel(pred) - sobel(target)| over every pixel and both directions.

    The divisor is 2 * N * H * W, so a unit-slope ramp against a flat map scores
    8 / 2 = 4 on interior pixels.
    """
    _check_pair(pred, target)
    # the filter is linear, so one pass over the difference suffices
    return ad.mean(ad.absolute(sobel(_as_maps(ad.sub(pred, target)))))


def weighted_sum(components: dict[str, float], w: LossWeights) -> float:
    return (w.l1 * components["l1"] + w.mse * components["mse"]
            + w.ssim * components["ssim_loss"] + w.grad * components["grad_loss"])


def composite_loss(pred: Tensor, target: Tensor, w: LossWeights = LossWeights()) -> tuple[Tensor, dict[str, float]]:
    """w1*L1 + w2*MSE + w3*(1 - SSIM) + w4*GradL1, plus the unweighted components.

    Terms whose weight is zero are still reported but kept out of the graph.
    """
    _check_pair(pred, target)
    diff = ad.sub(pred, target)
    terms = {"l1": ad.mean(ad.absolute(diff)), "mse": ad.mean(ad.square(diff))}
    weights = {"l1": w.l1, "mse": w.mse, "ssim_loss": w.ssim, "grad_loss": w.grad}
    if w.ssim > 0:
        terms["ssim_loss"] = ad.sub(1.0, ssim_tensor(pred, target))
    if w.grad > 0:
        terms["grad_loss"] = sobel_gradient_loss(pred, target)
    total = None
    for key, t in terms.items():
        if weights[key] > 0:
            total = ad.mul(t, weights[key]) if total is None else ad.add(total, ad.mul(t, weights[key]))
    if total is None:
        total = ad.mul(terms["l1"], 0.0)
    breakdown = {k: float(t.data) for k, t in terms.items()}
    with ad.no_grad():
        if "ssim_loss" not in breakdown:
            breakdown["ssim_loss"] = 1.0 - float(ssim_tensor(pred, target).data)
        if "grad_loss" not in breakdown:
            breakdown["grad_loss"] = float(sobel_gradient_loss(pred, target).data)
    return total, breakdown


def ssim(a, b) -> float:
    with ad.no_grad():
        return float(ssim_tensor(Tensor(a, dtype=np.float64), Tensor(b, dtype=np.float64)).data)


def nmse(pred, target) -> float:
    pred, target = np.asarray(pred, np.float64), np.asarray(target, np.float64)
    err = float(np.sum((pred - target) ** 2))
    ref = float(np.sum(target ** 2))
    if ref == 0.0:
        if err == 0.0:
            return 0.0
        raise DomainError("NMSE is undefined for an all-zero target with nonzero error")
    return err / ref


def psnr_from_mse(mse: float) -> float:
    return PSNR_CAP if mse < 1e-10 else min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def metrics(pred, target) -> dict[str, float]:
    """NMSE, RMSE, SSIM and PSNR of a prediction against its target."""
    pred, target = np.asarray(pred, np.float64), np.asarray(target, np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    mse = float(np.mean((pred - target) ** 2))
    return {
        "nmse": nmse(pred, target),
        "rmse": math.sqrt(mse),
        "ssim": ssim(pred, target),
        "psnr": psnr_from_mse(mse),
    }
