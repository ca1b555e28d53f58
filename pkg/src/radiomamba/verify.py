"""Finite-difference gradient suites, grouped by scope, run in 64-bit precision."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import GradcheckReport, Parameter, Tensor

SCOPES = ("ops", "ssm", "block", "model")
DEFAULT_TOL = {"ops": 1e-4, "ssm": 1e-4, "block": 1e-3, "model": 3e-3}
# every backward rule a negative control may scale
RULES = ("add", "sub", "mul", "div", "neg", "exp", "softplus", "gelu", "sigmoid", "silu", "abs", "square",
         "sqrt", "sum", "mean", "reshape", "transpose", "flip", "concat", "split", "pad_reflect", "linear",
         "layernorm", "conv2d", "conv2d_transposed", "selective_scan_sequential", "selective_scan_parallel")


@dataclass
class Case:
    name: str
    build: Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]
    max_per_param: int | None = None


def _p(rng, *shape, low=None, high=None, name="x"):
    data = rng.standard_normal(shape) if low is None else rng.uniform(low, high, shape)
    return Parameter(data, name=name, dtype=np.float64)


def _readout(build_graph):
    """Wrap a graph builder so its readout weights are drawn once."""
    def build(rng):
        out, params = build_graph(rng)
        w = Tensor(np.random.default_rng(int(rng.integers(2 ** 31))).standard_normal(out().shape), dtype=np.float64)
        return (lambda: ad.sum(ad.mul(out(), w))), params
    return build


def _op(fn, shapes, low=None, high=None):
    def graph(rng):
        xs = [_p(rng, *s, low=low, high=high, name=f"x{i}") for i, s in enumerate(shapes)]
        return (lambda: fn(*xs)), xs
    return _readout(graph)


def _module(make, x_shape):
    def graph(rng):
        m = make(rng)
        x = _p(rng, *x_shape)
        return (lambda: m(x)), [x, *m.parameters()]
    return _readout(graph)


def _scalar_fn(fn, shapes, low=None, high=None):
    def build(rng):
        xs = [_p(rng, *s, low=low, high=high, name=f"x{i}") for i, s in enumerate(shapes)]
        return (lambda: fn(*xs)), xs
    return build


def _op_cases() -> list[Case]:
    from . import losses

    ew = [(3, 4), (3, 4)]
    return [
        Case("add (broadcast)", _op(ad.add, [(3, 4), (4,)])),
        Case("sub", _op(ad.sub, ew)),
        Case("mul (broadcast)", _op(ad.mul, [(2, 3, 4), (3, 4)])),
        Case("div", _op(ad.div, ew, low=0.5, high=2.0)),
        Case("neg", _op(ad.neg, [(5,)])),
        Case("exp", _op(ad.exp, [(3, 4)])),
        Case("softplus", _op(ad.softplus, [(3, 4)])),
        Case("gelu", _op(ad.gelu, [(3, 4)])),
        Case("sigmoid", _op(ad.sigmoid, [(3, 4)])),
        Case("silu", _op(ad.silu, [(3, 4)])),
        Case("abs", _op(ad.absolute, [(3, 4)], low=0.1, high=2.0)),
        Case("square", _op(ad.square, [(3, 4)])),
        Case("sqrt", _op(ad.sqrt, [(3, 4)], low=0.5, high=2.0)),
        Case("sum (axis)", _op(lambda x: ad.sum(x, axis=1), [(3, 4, 2)])),
        Case("mean (axis, keepdims)", _op(lambda x: ad.mean(x, axis=0, keepdims=True), [(3, 4)])),
        Case("reshape", _op(lambda x: ad.reshape(x, (4, 3)), [(3, 4)])),
        Case("transpose", _op(lambda x: ad.transpose(x, (2, 0, 1)), [(2, 3, 4)])),
        Case("flip", _op(lambda x: ad.flip(x, 1), [(2, 5)])),
        Case("concat", _op(lambda a, b: ad.concat([a, b], axis=1), [(2, 3), (2, 2)])),
        Case("split", _op(lambda x: ad.mul(*ad.split(x, [2, 2], axis=1)), [(3, 4)])),
        Case("reverse_sequence", _op(ad.reverse_sequence, [(2, 5, 3)])),
        Case("pad_reflect", _op(lambda x: ad.pad_reflect(x, 1), [(1, 2, 4, 4)])),
        Case("linear", _op(ad.linear, [(2, 3, 4), (4, 5), (5,)])),
        Case("layernorm", _op(ad.layernorm, [(2, 3, 5), (5,), (5,)])),
        Case("conv2d 3x3 pad 1", _op(lambda x, w, b: ad.conv2d(x, w, b, padding=1), [(2, 3, 5, 5), (4, 3, 3, 3), (4,)])),
        Case("conv2d depthwise", _op(lambda x, w, b: ad.conv2d(x, w, b, padding=1, groups=3),
                                     [(1, 3, 5, 5), (3, 1, 3, 3), (3,)])),
        Case("conv2d stride 2", _op(lambda x, w, b: ad.conv2d(x, w, b, stride=2, padding=1),
                                    [(1, 2, 6, 6), (3, 2, 3, 3), (3,)])),
        Case("conv2d 1x1", _op(lambda x, w, b: ad.conv2d(x, w, b), [(2, 3, 4, 4), (2, 3, 1, 1), (2,)])),
        Case("conv2d_transposed", _op(ad.conv2d_transposed, [(1, 3, 3, 3), (3, 2, 2, 2), (2,)])),
        Case("ssim", _scalar_fn(losses.ssim_tensor, [(1, 1, 12, 12), (1, 1, 12, 12)], low=0.0, high=1.0)),
        Case("sobel gradient loss", _scalar_fn(losses.sobel_gradient_loss, [(1, 1, 6, 6), (1, 1, 6, 6)])),
        Case("composite loss", _scalar_fn(lambda a, b: losses.composite_loss(a, b)[0],
                                          [(1, 1, 12, 12), (1, 1, 12, 12)], low=0.0, high=1.0)),
    ]


def _scan_graph(mode):
    def graph(rng):
        Bn, L, C, N = 2, 7, 3, 4
        leaves = [_p(rng, Bn, L, C, name="u"), _p(rng, Bn, L, C, low=0.01, high=0.5, name="delta"),
                  _p(rng, C, N, low=-5.0, high=-0.5, name="A"), _p(rng, Bn, L, N, name="B"),
                  _p(rng, Bn, L, N, name="C"), _p(rng, C, name="D")]
        from .ssm import selective_scan
        return (lambda: selective_scan(*leaves, mode=mode)), leaves
    return _readout(graph)


def _ssm_cases() -> list[Case]:
    from .scan2d import MambaOperator, SS2D
    from .ssm import SelectiveParams, selective_parameters, selective_scan_sequential

    def projections(rng):
        p = SelectiveParams.init(3, 2, rng, dtype=np.float64)
        u = _p(rng, 1, 5, 3)
        return (lambda: ad.concat(list(selective_parameters(u, p)), axis=-1)), [u, *p.tensors().values()]

    def scan_full(rng):
        p = SelectiveParams.init(3, 4, rng, dtype=np.float64)
        u = _p(rng, 2, 9, 3)
        return (lambda: selective_scan_sequential(p, u)), [u, *p.tensors().values()]

    return [
        Case("selective scan (sequential)", _scan_graph("sequential")),
        Case("selective scan (parallel)", _scan_graph("parallel")),
        Case("selective projections", _readout(projections)),
        Case("selective scan with projections", _readout(scan_full)),
        Case("mamba operator (gated)", _module(lambda r: MambaOperator(3, 2, r, gated=True, dtype=np.float64),
                                               (1, 6, 3))),
        Case("SS2D", _module(lambda r: SS2D(3, 2, r, dtype=np.float64), (1, 3, 3, 4))),
    ]


def _block_cases() -> list[Case]:
    from .blocks import BlockConfig, MambaConvBlock, ResidualConvBlock

    cases = []
    for variant in ("depthwise_separable", "standard"):
        cases.append(Case(f"residual conv ({variant})",
                          _module(lambda r, v=variant: ResidualConvBlock(2, r, v, dtype=np.float64), (1, 2, 4, 4))))
        cases.append(Case(f"mamba-conv block ({variant})",
                          _module(lambda r, v=variant: MambaConvBlock(BlockConfig(2, 3, v), r, dtype=np.float64),
                                  (1, 2, 4, 4))))
    cases.append(Case("mamba-conv block (gated)",
                      _module(lambda r: MambaConvBlock(BlockConfig(2, 2, gated=True), r, dtype=np.float64),
                              (1, 2, 4, 4))))
    return cases


def _model_cases() -> list[Case]:
    from .unet import ModelConfig, build_model

    cfg = ModelConfig(base_channels=4, stage_depths=[1, 1, 1], bottleneck_depth=1, grid=16, state_dim=2)

    def graph(rng):
        m = build_model(cfg, seed=int(rng.integers(2 ** 31)), dtype=np.float64)
        x = Parameter(rng.random((1, 2, 16, 16)), name="input", dtype=np.float64)
        return (lambda: m(x)), [x, *m.parameters()]

    return [Case("model 16x16", _readout(graph), max_per_param=4)]


def cases(scope: str) -> list[Case]:
    if scope not in SCOPES:
        raise ad.ConfigurationError(f"scope must be one of {SCOPES}, got {scope!r}")
    return {"ops": _op_cases, "ssm": _ssm_cases, "block": _block_cases, "model": _model_cases}[scope]()


@contextlib.contextmanager
def corrupted(rules=RULES, factor: float = 1.1):
    with contextlib.ExitStack() as stack:
        for rule in rules:
            stack.enter_context(ad.corrupt_backward(rule, factor))
        yield


def run_scope(scope: str, tol: float | None = None, corrupt: bool = False,
              seed: int = 0) -> list[tuple[str, GradcheckReport]]:
    """Run every case of ``scope`` at ``tol`` (the scope default if omitted)."""
    tol = DEFAULT_TOL[scope] if tol is None else tol
    results = []
    with ad.precision(np.float64), (corrupted() if corrupt else contextlib.nullcontext()):
        for i, case in enumerate(cases(scope)):
            f, params = case.build(np.random.default_rng([seed, i]))
            results.append((case.name, ad.gradcheck(f, params, tol=tol, max_per_param=case.max_per_param)))
    return results
