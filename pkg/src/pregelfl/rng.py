"""Seed derivation so every random stream is reproducible and independent."""

from __future__ import annotations

import zlib

import numpy as np

from .errors import ValidationError


def derive_seed(seed: int, *tags) -> int:
    """Deterministic 63-bit seed from a base seed and any number of tags."""
    seed = int(seed)
    if seed < 0:
        raise ValidationError("seed must be non-negative")
    words = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF]
    words += [zlib.crc32(repr(t).encode()) for t in tags]
    state = np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)
    return int(state[0] >> np.uint64(1))


def generator(seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *tags))
