"""Deterministic random source built on the splitmix64 mixer.

The generator is counter based: draw number k (1-indexed) is
``mix64(seed + k * GOLDEN)`` where ``mix64`` is the splitmix64 finalizer,
so a given seed produces the same sequence on every platform regardless
of how draws are grouped into calls.  Bulk draws are vectorized with
wrapping uint64 arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(z: int) -> int:
    """splitmix64 finalizer on plain Python integers (reference path)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _C1) & _MASK
    z = ((z ^ (z >> 27)) * _C2) & _MASK
    return z ^ (z >> 31)


class Rng:
    """Seeded stream of uniform/normal draws and permutations.

    Same seed, same call pattern, same values; the stream position
    advances by the number of raw draws each call consumes.
    """

    algorithm = "splitmix64"

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._count = 0

    def _raw(self, n: int) -> np.ndarray:
        """Next n raw uint64 values."""
        start = self._count + 1
        self._count += n
        with np.errstate(over="ignore"):
            k = np.arange(start, start + n, dtype=np.uint64)
            z = np.uint64(self.seed) + np.uint64(GOLDEN) * k
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_C1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_C2)
            z = z ^ (z >> np.uint64(31))
        return z

    def uniform(self, shape=None) -> np.ndarray | float:
        """Uniform draws in [0, 1) with 53-bit resolution."""
        if shape is None:
            return float(self._raw(1)[0] >> np.uint64(11)) * _INV_2_53
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u.reshape(shape)

    def normal(self, shape=None) -> np.ndarray | float:
        """Standard normal draws via Box-Muller."""
        scalar = shape is None
        shape = (1,) if scalar else ((shape,) if isinstance(shape, int) else tuple(shape))
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(1.0 - u1))  # 1-u1 in (0,1] keeps log finite
        theta = 2.0 * math.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n].reshape(shape)
        return float(z[0]) if scalar else z

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        span = hi - lo + 1
        return min(lo + int(self.uniform() * span), hi)

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates permutation of range(n)."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(0, i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def fork(self, salt: int) -> "Rng":
        """Independent child stream; deterministic in (seed, salt)."""
        return Rng(mix64(self.seed ^ mix64(salt + 1)))
