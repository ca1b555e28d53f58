"""Deterministic synthetic radio environments with a line-of-sight attenuation oracle.

For a free pixel at Euclidean distance d from the transmitter,
p = g(d) * exp(-kappa * n_block), g(d) = 1 / (1 + d / g_scale), where n_block
counts obstacle pixels strictly between the two on the Bresenham line.
Obstacle pixels (static or dynamic) get p = 0.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .sample import DataError, EnvironmentSample, normalize_mode

MIN_GRID = 32
KAPPA = 0.5
G_SCALE = 8.0
BUILDINGS = (4, 10)
BUILDING_SIZE = (4, 12)
VEHICLES = (0, 8)


def free_space_gain(d, g_scale: float = G_SCALE):
    return 1.0 / (1.0 + np.asarray(d, dtype=np.float64) / g_scale)


@nb.njit(cache=True)
def _blocked_count(obst, i0, j0, i1, j1):
    """Obstacle pixels strictly between (i0, j0) and (i1, j1) on the Bresenham line."""
    di = abs(i1 - i0)
    dj = -abs(j1 - j0)
    si = 1 if i0 < i1 else -1
    sj = 1 if j0 < j1 else -1
    err = di + dj
    i, j = i0, j0
    count = 0
    while True:
        if i == i1 and j == j1:
            return count
        if not (i == i0 and j == j0) and obst[i, j]:
            count += 1
        e2 = 2 * err
        if e2 >= dj:
            err += dj
            i += si
        if e2 <= di:
            err += di
            j += sj


@nb.njit(cache=True)
def _oracle(obst, ti, tj, kappa, g_scale, out):
    n = obst.shape[0]
    for i in range(n):
        for j in range(n):
            if obst[i, j]:
                out[i, j] = 0.0
                continue
            d = math.sqrt((i - ti) ** 2 + (j - tj) ** 2)
            out[i, j] = math.exp(-kappa * _blocked_count(obst, ti, tj, i, j)) / (1.0 + d / g_scale)


def pathloss_oracle(obstacles: np.ndarray, tx: tuple[int, int], kappa: float = KAPPA,
                    g_scale: float = G_SCALE) -> np.ndarray:
    obst = np.ascontiguousarray(obstacles, dtype=np.uint8)
    out = np.empty(obst.shape, dtype=np.float64)
    _oracle(obst, int(tx[0]), int(tx[1]), float(kappa), float(g_scale), out)
    return out


def synth_generate(seed: int, grid: int = 64, mode: str = "SRM", kappa: float = KAPPA,
                   g_scale: float = G_SCALE) -> EnvironmentSample:
    """One random city block: buildings, optional vehicles, a transmitter and its pathloss map."""
    mode = normalize_mode(mode)
    if grid < MIN_GRID:
        raise DataError(f"grid must be at least {MIN_GRID}, got {grid}")
    rng = np.random.default_rng(seed)
    h_s = np.zeros((grid, grid), dtype=np.uint8)
    for _ in range(rng.integers(BUILDINGS[0], BUILDINGS[1] + 1)):
        h, w = rng.integers(BUILDING_SIZE[0], BUILDING_SIZE[1] + 1, size=2)
        i, j = rng.integers(0, grid - h + 1), rng.integers(0, grid - w + 1)
        h_s[i:i + h, j:j + w] = 1
    h_d = np.zeros_like(h_s)
    if mode == "DRM":
        # 1x2 vehicles on street pixels, i.e. both cells outside any building
        slots = np.argwhere((h_s[:, :-1] == 0) & (h_s[:, 1:] == 0))
        n_vehicles = rng.integers(VEHICLES[0], VEHICLES[1] + 1)
        for k in rng.choice(len(slots), size=min(n_vehicles, len(slots)), replace=False):
            i, j = slots[k]
            h_d[i, j:j + 2] = 1
    free = np.argwhere((h_s | h_d) == 0)
    if len(free) == 0:
        raise DataError(f"seed {seed}: no free pixel left for the transmitter")
    ti, tj = free[rng.integers(len(free))]
    r = np.zeros_like(h_s)
    r[ti, tj] = 1
    p = pathloss_oracle(h_s | h_d, (ti, tj), kappa, g_scale)
    return EnvironmentSample(h_s, h_d, r, p, name=f"synth-{seed}").validate()
