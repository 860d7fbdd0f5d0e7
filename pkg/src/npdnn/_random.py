"""Seeded random streams.

Synthetic data uses a SplitMix64 stream so the generated series only
depends on integer arithmetic plus ``math.log``/``math.cos``. Everything
else (weight init, shuffling, TPE sampling) draws from numpy's PCG64,
seeded through :func:`derive_seed` so each consumer gets its own stream.
"""

import math
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator with 53-bit uniform doubles and Box-Muller normals."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self):
        """Double in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def gauss(self, mu=0.0, sigma=1.0):
        # 1 - u keeps the log argument in (0, 1]; one normal per pair of draws
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def derive_seed(seed, *tags):
    """Fold ``seed`` and string/int tags into a non-negative 64-bit seed."""
    mixer = SplitMix64(seed)
    value = mixer.next_u64()
    for tag in tags:
        if isinstance(tag, str):
            tag = zlib.crc32(tag.encode("utf-8"))
        mixer = SplitMix64(value ^ (int(tag) & _MASK64))
        value = mixer.next_u64()
    return value


def make_rng(seed, *tags):
    return np.random.default_rng(derive_seed(seed, *tags))
