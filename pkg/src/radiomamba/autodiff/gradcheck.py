"""Central-difference verification of backward rules."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .tensor import _CORRUPTED, NumericError, Tensor


@dataclass
class Offender:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    error: float


@dataclass
class GradcheckReport:
    passed: bool
    tol: float
    eps: float
    checked: int
    max_error: float
    worst: list[Offender] = field(default_factory=list)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status} checked={self.checked} max_error={self.max_error:.3e} tol={self.tol:g}"]
        for o in self.worst:
            lines.append(f"  {o.name}{list(o.index)} analytic={o.analytic:.6e} "
                         f"numeric={o.numeric:.6e} err={o.error:.3e}")
        return "\n".join(lines)


@contextlib.contextmanager
def corrupt_backward(op: str, factor: float = 1.1) -> Iterator[None]:
    """Scale every gradient flowing out of ``op``'s backward rule (negative control)."""
    prev = _CORRUPTED.get(op)
    _CORRUPTED[op] = factor
    try:
        yield
    finally:
        if prev is None:
            _CORRUPTED.pop(op, None)
        else:
            _CORRUPTED[op] = prev


def _name(t: Tensor, i: int) -> str:
    return getattr(t, "name", "") or f"param{i}"


def _scalar(out: Tensor) -> float:
    v = float(np.asarray(out.data).reshape(()))
    return v


def gradcheck(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-3,
              tol: float = 1e-4, max_per_param: int | None = None, seed: int = 0,
              n_worst: int = 5) -> GradcheckReport:
    """Compare analytic gradients of the scalar ``f()`` with central differences.

    Every entry of every tensor in ``params`` is perturbed in place, unless
    ``max_per_param`` caps it to a random subset per tensor. The error metric
    is ``|analytic - numeric| / max(1, |numeric|)``. Parameters must be 64-bit.
    """
    params = list(params)
    for i, p in enumerate(params):
        if p.dtype != np.float64:
            raise TypeError(f"gradcheck needs float64 tensors; {_name(p, i)} is {p.dtype}")
        p.grad = None
        p.requires_grad = True

    out = f()
    if out.size != 1:
        raise ValueError("gradcheck needs a scalar-valued function")
    base = _scalar(out)
    if not np.isfinite(base):
        raise NumericError(f"non-finite function value {base} at the base point")
    out.backward()
    analytic = []
    for i, p in enumerate(params):
        g = np.zeros_like(p.data) if p.grad is None else p.grad
        if not np.all(np.isfinite(g)):
            bad = tuple(int(v) for v in np.argwhere(~np.isfinite(g))[0])
            raise NumericError(f"non-finite analytic gradient in {_name(p, i)} at {bad}")
        analytic.append(g.copy())

    rng = np.random.default_rng(seed)
    offenders: list[Offender] = []
    checked = 0
    max_err = 0.0
    for i, p in enumerate(params):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idx = np.sort(rng.choice(flat.size, size=max_per_param, replace=False))
        for k in idx:
            orig = flat[k]
            flat[k] = orig + eps
            fp = _scalar(f())
            flat[k] = orig - eps
            fm = _scalar(f())
            flat[k] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                pos = np.unravel_index(k, p.shape)
                raise NumericError(f"non-finite value perturbing {_name(p, i)} at {tuple(pos)}")
            numeric = (fp - fm) / (2 * eps)
            a = float(analytic[i].reshape(-1)[k])
            err = abs(a - numeric) / max(1.0, abs(numeric))
            checked += 1
            max_err = max(max_err, err)
            pos = tuple(int(v) for v in np.unravel_index(k, p.shape))
            offenders.append(Offender(_name(p, i), pos, a, numeric, err))
            if len(offenders) > 4 * n_worst:
                offenders.sort(key=lambda o: -o.error)
                del offenders[n_worst:]
    offenders.sort(key=lambda o: -o.error)
    for p in params:
        p.grad = None
    return GradcheckReport(passed=max_err <= tol, tol=tol, eps=eps, checked=checked,
                           max_error=max_err, worst=offenders[:n_worst])
