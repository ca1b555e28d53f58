"""Wall-clock helpers: latency statistics and the selective-scan length sweep."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_LENGTHS = (256, 1024, 4096, 16384)


def latency_stats(fn: Callable[[], object], runs: int = 20, warmup: int = 3) -> dict[str, float]:
    """Mean, median and 95th percentile (seconds) of ``runs`` timed calls after ``warmup`` untimed ones."""
    if runs < 1 or warmup < 0:
        raise ad.ConfigurationError("need runs >= 1 and warmup >= 0")
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    t = np.asarray(times)
    return {"runs": runs, "warmup": warmup, "mean_s": float(t.mean()), "median_s": float(np.median(t)),
            "p95_s": float(np.percentile(t, 95))}


def loglog_slope(lengths: Sequence[int], seconds: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(length)."""
    return float(np.polyfit(np.log(lengths), np.log(seconds), 1)[0])


@dataclass
class ScanTiming:
    mode: str
    lengths: list[int]
    seconds: list[float]

    @property
    def slope(self) -> float:
        return loglog_slope(self.lengths, self.seconds)


def scan_inputs(length: int, channels: int, state_dim: int, seed: int = 0, dtype=np.float32) -> list[Tensor]:
    rng = np.random.default_rng(seed)
    return [Tensor(rng.standard_normal((1, length, channels)), dtype=dtype),
            Tensor(rng.uniform(0.01, 0.1, (1, length, channels)), dtype=dtype),
            Tensor(-np.tile(np.arange(1.0, state_dim + 1), (channels, 1)), dtype=dtype),
            Tensor(rng.standard_normal((1, length, state_dim)), dtype=dtype),
            Tensor(rng.standard_normal((1, length, state_dim)), dtype=dtype),
            Tensor(rng.standard_normal(channels), dtype=dtype)]


def time_scan(lengths: Sequence[int] = DEFAULT_LENGTHS, channels: int = 64, state_dim: int = 8,
              modes: Sequence[str] = ("sequential", "parallel"), repeats: int = 5,
              dtype=np.float32) -> list[ScanTiming]:
    """Best-of-``repeats`` forward time of the selective scan at each length, per schedule."""
    from .ssm import selective_scan

    out = []
    for mode in modes:
        seconds = []
        for L in lengths:
            args = scan_inputs(L, channels, state_dim, dtype=dtype)
            with ad.no_grad():
                selective_scan(*args, mode=mode)
                best = np.inf
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    selective_scan(*args, mode=mode)
                    best = min(best, time.perf_counter() - t0)
            seconds.append(best)
        out.append(ScanTiming(mode, list(lengths), seconds))
    return out
