"""The per-transmitter training example and its invariants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("SRM", "DRM")


class DataError(Exception):
    """Malformed, missing or inconsistent dataset content."""


def normalize_mode(mode: str) -> str:
    m = mode.upper()
    if m not in MODES:
        raise DataError(f"mode must be one of {MODES}, got {mode!r}")
    return m


@dataclass
class EnvironmentSample:
    """Binary obstacle maps, one-hot transmitter map and normalised pathloss, all N x N."""

    h_s: np.ndarray
    h_d: np.ndarray
    r: np.ndarray
    p: np.ndarray
    name: str = ""

    @property
    def grid(self) -> int:
        return self.p.shape[0]

    @property
    def transmitter(self) -> tuple[int, int]:
        i, j = np.argwhere(self.r == 1)[0]
        return int(i), int(j)

    def validate(self) -> "EnvironmentSample":
        where = f" ({self.name})" if self.name else ""
        shape = self.p.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise DataError(f"maps must be square 2-D grids, got {shape}{where}")
        for key in ("h_s", "h_d", "r"):
            arr = getattr(self, key)
            if arr.shape != shape:
                raise DataError(f"{key} has shape {arr.shape}, expected {shape}{where}")
            if not np.isin(arr, (0, 1)).all():
                raise DataError(f"{key} must be binary{where}")
        hot = int(self.r.sum())
        if hot != 1:
            raise DataError(f"transmitter map must have exactly one hot pixel, found {hot}{where}")
        if self.h_s[self.transmitter]:
            raise DataError(f"transmitter lies inside a static obstacle{where}")
        if not np.all((self.p >= 0) & (self.p <= 1)):
            raise DataError(f"pathloss values must lie in [0, 1]{where}")
        return self
