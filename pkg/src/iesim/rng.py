"""Seeded random number generation with documented substream splitting.

The generator is a SplitMix64 counter. It is deliberately implemented here
rather than taken from numpy so the compiled event-loop kernel can reproduce
the exact same draw sequence with plain C arithmetic: every sampled duration,
tie-break and Bernoulli draw is then bit-identical between the pure-Python
and compiled simulation cores.

Splitting rule (the contract for replica independence):

    child_seed(seed, index) = mix64(seed + (index + 1) * GOLDEN)

where ``mix64`` is the SplitMix64 output function. Replica ``i`` of a run
with root seed ``s`` uses ``child_seed(s, i)``; component ``k`` of a replica
uses ``child_seed(replica_seed, k + 1)`` while the replica's own stream
(stream index 0) serves engine-global draws. Streams derived this way never
depend on execution order.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 output function (Steele, Lea & Flood)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def child_seed(seed: int, index: int) -> int:
    """Derive an independent substream seed (see module docstring)."""
    return mix64((seed + (index + 1) * GOLDEN) & MASK64)


class Rng:
    """SplitMix64 stream with the sampling primitives the simulator needs."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 bits of entropy."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, a: float, b: float) -> float:
        return a + (b - a) * self.random()

    def normal(self, mu: float, sigma: float) -> float:
        """Marsaglia polar method; the spare deviate is discarded.

        Discarding keeps the generator stateless between calls, which is what
        makes the compiled twin trivially identical.
        """
        while True:
            u = 2.0 * self.random() - 1.0
            v = 2.0 * self.random() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                return mu + sigma * u * math.sqrt(-2.0 * math.log(s) / s)

    def exponential(self, rate: float) -> float:
        return -math.log(1.0 - self.random()) / rate

    def poisson(self, lam: float) -> int:
        """Knuth multiplication method; halves large means recursively.

        O(lam) per draw, fine for the duration-scale means used here.
        """
        if lam <= 0.0:
            return 0
        if lam > 60.0:
            half = lam * 0.5
            return self.poisson(half) + self.poisson(lam - half)
        limit = math.exp(-lam)
        k = 0
        p = 1.0
        while True:
            p *= self.random()
            if p <= limit:
                return k
            k += 1

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) for tie-breaking among n candidates."""
        return min(int(self.random() * n), n - 1)
