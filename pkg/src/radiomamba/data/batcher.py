"""Stacking samples into network inputs, and a stateless shuffled batch schedule."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..seeding import substream
from .sample import DataError, EnvironmentSample, normalize_mode


def input_channels(mode: str) -> int:
    return 3 if normalize_mode(mode) == "DRM" else 2


def stack(samples: Sequence[EnvironmentSample], mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Inputs (B, C_in, N, N) as [h_s, r] (SRM) or [h_s, h_d, r] (DRM); targets (B, 1, N, N)."""
    if not samples:
        raise DataError("cannot stack an empty batch")
    grids = {s.p.shape for s in samples}
    if len(grids) != 1:
        raise DataError(f"mixed grid sizes in one batch: {sorted(grids)}")
    drm = normalize_mode(mode) == "DRM"
    x = np.stack([np.stack([s.h_s, s.h_d, s.r] if drm else [s.h_s, s.r]) for s in samples])
    y = np.stack([s.p[None] for s in samples])
    return x.astype(np.float32), y.astype(np.float32)


class Batcher:
    """Epoch-wise shuffled mini-batches; the batch at any step is a pure function of the step.

    Each epoch is a fresh permutation from the (shuffle_seed, epoch) stream and the
    incomplete tail batch is dropped, so resuming at step ``s`` needs no saved state.
    """

    def __init__(self, samples: Sequence[EnvironmentSample], batch_size: int, shuffle_seed: int, mode: str):
        if batch_size < 1:
            raise DataError(f"batch size must be positive, got {batch_size}")
        if len(samples) < batch_size:
            raise DataError(f"{len(samples)} samples cannot fill a batch of {batch_size}")
        if len({s.p.shape for s in samples}) != 1:
            raise DataError("mixed grid sizes in one dataset")
        self.samples = list(samples)
        self.batch_size = batch_size
        self.shuffle_seed = shuffle_seed
        self.mode = normalize_mode(mode)
        self.per_epoch = len(self.samples) // batch_size
        self._order: tuple[int, np.ndarray] | None = None

    def order(self, epoch: int) -> np.ndarray:
        if self._order is None or self._order[0] != epoch:
            self._order = (epoch, substream(self.shuffle_seed, "shuffle", epoch).permutation(len(self.samples)))
        return self._order[1]

    def indices(self, step: int) -> np.ndarray:
        epoch, j = divmod(step, self.per_epoch)
        return self.order(epoch)[j * self.batch_size:(j + 1) * self.batch_size]

    def batch(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        return stack([self.samples[i] for i in self.indices(step)], self.mode)


DIHEDRAL = 8


def dihedral(a: np.ndarray, k: int) -> np.ndarray:
    """One of the 8 square symmetries on the last two axes: optional transpose, then k % 4 quarter turns."""
    if not 0 <= k < DIHEDRAL:
        raise DataError(f"dihedral index must be in [0, {DIHEDRAL}), got {k}")
    if k >= 4:
        a = np.swapaxes(a, -1, -2)
    return np.ascontiguousarray(np.rot90(a, k % 4, axes=(-2, -1)))


def augment(x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Apply an independent random square symmetry to each (input, target) pair of a batch."""
    ks = rng.integers(0, DIHEDRAL, size=len(x))
    return (np.stack([dihedral(a, int(k)) for a, k in zip(x, ks)]),
            np.stack([dihedral(a, int(k)) for a, k in zip(y, ks)]))
