"""Deterministic randomness built on splitmix64.

All sampling in the engine (episode selection, epoch shuffles, synthetic
data, random weight init) flows through this module so that runs are
reproducible bit-for-bit across platforms. splitmix64 is used because it
is a tiny, portable algorithm with a well-defined integer recurrence:

    state  <- (state + 0x9E3779B97F4A7C15) mod 2^64
    output <- scramble(state)

Independent streams are derived with :func:`stream_seed`; stream ``k`` of
base seed ``s`` is the ``(k+1)``-th raw output of a splitmix64 generator
seeded with ``s``.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _scramble(z: int) -> int:
    """splitmix64 output function (finalizer)."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_seed(seed: int, stream: int) -> int:
    """Seed for independent stream ``stream`` of base ``seed``."""
    return _scramble((seed + (stream + 1) * _GOLDEN) & _MASK64)


class SplitMix64:
    """splitmix64 generator with the helpers the engine needs."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_uint64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _scramble(self._state)

    def next_below(self, bound: int) -> int:
        """Integer in [0, bound) via modulo reduction.

        The slight modulo bias is irrelevant here; a fixed, portable
        mapping matters more than perfect uniformity.
        """
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_uint64() % bound

    def next_float(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_uint64() >> 11) * 2.0**-53

    def next_normal(self) -> float:
        """Standard normal variate (Box-Muller, pair-cached)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 in (0, 1] so log() is finite
        u1 = ((self.next_uint64() >> 11) + 1) * 2.0**-53
        u2 = self.next_float()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle (high-to-low index sweep)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]
