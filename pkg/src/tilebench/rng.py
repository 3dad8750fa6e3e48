"""SplitMix64 pseudo-random generator.

Every seeded draw in the toolkit (tile sampling, fold shuffles, extractor
weight init, corpus subsampling) goes through this generator so results are
bit-identical across platforms and Python versions. The constants are the
canonical SplitMix64 ones (Steele et al.).
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """64-bit SplitMix64 stream seeded with an arbitrary integer."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection."""
        if n <= 0:
            raise ValueError("below() needs a positive bound")
        # largest multiple of n that fits in 64 bits; draws past it would bias
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def unit(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def splitmix64_array(seed: int, count: int):
    """First `count` outputs of SplitMix64(seed) as a uint64 numpy array.

    SplitMix64 is counter-based, so the stream vectorizes exactly: draw i
    mixes the state seed + i * golden (wrapping at 64 bits). Must stay
    bit-identical to SplitMix64.next_u64.
    """
    import numpy as np

    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + idx * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def unit_floats(seed: int, count: int):
    """First `count` unit-interval floats of SplitMix64(seed), like unit()."""
    import numpy as np

    draws = splitmix64_array(seed, count)
    return (draws >> np.uint64(11)).astype("float64") * (2.0 ** -53)
