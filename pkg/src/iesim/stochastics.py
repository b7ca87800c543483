"""Probability distributions for mode and transition durations.

Distributions are immutable descriptions; sampling takes an explicit
:class:`~iesim.rng.Rng` so a draw sequence is a pure function of
(distribution, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

from .rng import Rng

DIRAC = "dirac"
UNIFORM = "uniform"
NORMAL = "normal"
POISSON = "poisson"
EXPONENTIAL = "exponential"

KINDS = (DIRAC, UNIFORM, NORMAL, POISSON, EXPONENTIAL)

# Integer codes used by the lowered simulation program.
KIND_CODE = {k: i for i, k in enumerate(KINDS)}


class DistributionError(ValueError):
    """Invalid distribution parameters, rejected at construction."""


@dataclass(frozen=True)
class DistributionRef:
    """One of Dirac(c), Uniform(a,b), Normal(mu,sigma), Poisson(lam),
    Exponential(rate).

    ``quantum`` only matters for Poisson: the discrete draw is multiplied by
    it, which is how a counting distribution doubles as a duration model
    (default quantum 1.0 keeps plain counts).
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    quantum: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DistributionError(f"unknown distribution kind {self.kind!r}")
        if self.kind == UNIFORM and not self.a < self.b:
            raise DistributionError(f"uniform requires a < b, got [{self.a}, {self.b}]")
        if self.kind == NORMAL and not self.b > 0:
            raise DistributionError(f"normal requires sigma > 0, got {self.b}")
        if self.kind in (POISSON, EXPONENTIAL) and not self.a > 0:
            raise DistributionError(f"{self.kind} requires a positive rate, got {self.a}")
        if self.quantum <= 0:
            raise DistributionError(f"quantum must be positive, got {self.quantum}")

    def mean(self) -> float:
        """Analytic mean (ignoring the >=0 clamp, negligible when mu >> sigma)."""
        if self.kind == DIRAC:
            return self.a
        if self.kind == UNIFORM:
            return 0.5 * (self.a + self.b)
        if self.kind == NORMAL:
            return self.a
        if self.kind == POISSON:
            return self.a * self.quantum
        return 1.0 / self.a  # exponential


def dirac(c: float) -> DistributionRef:
    return DistributionRef(DIRAC, c)


def uniform(a: float, b: float) -> DistributionRef:
    return DistributionRef(UNIFORM, a, b)


def normal(mu: float, sigma: float) -> DistributionRef:
    return DistributionRef(NORMAL, mu, sigma)


def poisson(lam: float, quantum: float = 1.0) -> DistributionRef:
    return DistributionRef(POISSON, lam, quantum=quantum)


def exponential(rate: float) -> DistributionRef:
    return DistributionRef(EXPONENTIAL, rate)


def sample(dist: DistributionRef, rng: Rng) -> float:
    """One draw. Negative Normal deviates are clamped to 0 (durations)."""
    k = dist.kind
    if k == DIRAC:
        return dist.a
    if k == UNIFORM:
        return rng.uniform(dist.a, dist.b)
    if k == NORMAL:
        return max(0.0, rng.normal(dist.a, dist.b))
    if k == POISSON:
        return rng.poisson(dist.a) * dist.quantum
    return rng.exponential(dist.a)
