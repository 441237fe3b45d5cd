"""Seeded random streams derived from ``(seed, purpose, index...)``."""

import zlib

import numpy as np


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Independent generator for one purpose; identical arguments give identical draws."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, _tag(purpose), *(int(i) for i in index)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
