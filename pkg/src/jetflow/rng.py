"""SplitMix64: the documented generator behind every seeded sweep.

State advances by the golden-gamma constant 0x9E3779B97F4A7C15 and each
output is mixed with the finalizer of Steele, Lea and Flood (2014).  Doubles
take the top 53 bits, so a seed reproduces the same stream on any platform.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int = 0):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def normal(self) -> float:
        # Box-Muller; 1 - u keeps the log argument in (0, 1]
        u1, u2 = 1.0 - self.random(), self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def randint(self, n: int) -> int:
        """Integer in [0, n)."""
        return self.next_u64() % n

    def spawn(self) -> "SplitMix64":
        return SplitMix64(self.next_u64())
