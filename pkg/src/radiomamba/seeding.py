"""Named random sub-streams derived from one user seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Independent generator for (seed, name, *index); stable across runs and platforms."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _key(name), *map(int, index)]))


def derive_seed(seed: int, name: str, *index: int) -> int:
    return int(np.random.SeedSequence([int(seed), _key(name), *map(int, index)]).generate_state(1)[0])
