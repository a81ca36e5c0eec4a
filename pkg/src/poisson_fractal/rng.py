"""Seed derivation and generator construction.

Every random stream is a numpy ``Philox`` generator (counter-based, 256-bit
key plus counter). Child seeds are derived by hashing ``(seed, tag, param)``
with BLAKE2b, so a replicate or refinement stream depends only on its
coordinates and never on scheduling.
"""
from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, tag: str, param: int | float | str = 0) -> int:
    """64-bit child seed for ``(seed, tag, param)``."""
    key = f"{int(seed) & SEED_MASK}:{tag}:{param!r}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def generator(seed: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & SEED_MASK)
    return np.random.Generator(np.random.Philox(ss))
