"""Seeded random streams.

A ``SeededRng`` is a PCG64 generator whose state comes from
``SeedSequence(seed, spawn_key=(stream,))``. Distinct stream ids give
independent sequences; the same ``(seed, stream)`` always replays the
same draws. Instances are stateful and must not be shared mid-stream
between threads; give each worker its own stream instead.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


class SeededRng:
    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"

    def spawn(self, stream: int) -> "SeededRng":
        """Fresh generator on another stream of the same seed."""
        return SeededRng(self.seed, stream)

    def normal(self, size=None, scale=1.0):
        return self.gen.normal(0.0, scale, size)

    def uniform(self, size=None):
        return self.gen.random(size)

    def permutation(self, n):
        return self.gen.permutation(n)


def derive_seed(*parts) -> int:
    """Hash arbitrary printable parts into a 64-bit seed (order matters)."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        b = repr(part).encode()
        h.update(struct.pack("<I", len(b)))
        h.update(b)
    return int.from_bytes(h.digest(), "little")


def sample_gaussian_matrix(rng: SeededRng, rows: int, cols: int, stddev: float = 1.0) -> np.ndarray:
    """I.i.d. ``Normal(0, stddev**2)`` matrix of shape ``(rows, cols)``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if not stddev > 0:
        raise ValueError("stddev must be positive")
    return rng.normal((rows, cols), stddev)
