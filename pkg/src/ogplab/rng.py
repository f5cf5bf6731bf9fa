"""Seed handling: every sampler accepts an int seed, a SeedSequence or a Generator."""
from __future__ import annotations

import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(0, 2**63)))
    return np.random.SeedSequence(seed)


def generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed_sequence(seed)))


def spawn(seed, count: int) -> list[np.random.SeedSequence]:
    return seed_sequence(seed).spawn(count)


def words(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform 64-bit words."""
    return rng.bit_generator.random_raw(size).astype(np.uint64)


def lineage(seed) -> int:
    """A u64 fingerprint of a seed, stored in binary formula files."""
    ss = seed_sequence(seed)
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])
