"""Distribution fitting from observed interval durations or event counts.

Maximum-likelihood point estimates plus a deterministic chi-square
goodness-of-fit statistic over ceil(sqrt(n)) equal-width bins, which is what
model selection compares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from . import stochastics
from .stochastics import DistributionRef


class FittingError(ValueError):
    pass


class DegenerateDataError(FittingError):
    """All samples identical; a spread parameter cannot be estimated."""


@dataclass(frozen=True)
class FitReport:
    distribution: DistributionRef
    sample_count: int
    chi_square: float
    dof: int

    def __post_init__(self):
        if self.sample_count < 2:
            raise FittingError("a fit needs at least 2 samples")


def _normal_cdf(x: float, mu: float, sigma: float) -> float:
    return 0.5 * (1.0 + math.erf((x - mu) / (sigma * math.sqrt(2.0))))


def _poisson_pmf(k: int, lam: float) -> float:
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1)) if lam > 0 else float(k == 0)


def _chi_square(samples: Sequence[float], dist: DistributionRef, n_params: int) -> tuple[float, int]:
    """Pearson statistic over ceil(sqrt(n)) equal-width bins on [min, max]."""
    n = len(samples)
    bins = math.ceil(math.sqrt(n))
    lo, hi = min(samples), max(samples)
    if hi <= lo:
        hi = lo + 1.0
    width = (hi - lo) / bins

    observed = [0] * bins
    for x in samples:
        idx = min(int((x - lo) / width), bins - 1)
        observed[idx] += 1

    expected = []
    for i in range(bins):
        a, b = lo + i * width, lo + (i + 1) * width
        if dist.kind == stochastics.POISSON:
            # integer support: sum the pmf over the integers in [a, b)
            # (the last bin is closed above)
            first = math.ceil(a)
            last = math.floor(b) if i == bins - 1 else math.ceil(b) - 1
            p = sum(_poisson_pmf(k, dist.a) for k in range(max(0, first), max(0, last) + 1))
        elif dist.kind == stochastics.NORMAL:
            p = _normal_cdf(b, dist.a, dist.b) - _normal_cdf(a, dist.a, dist.b)
        elif dist.kind == stochastics.EXPONENTIAL:
            p = math.exp(-dist.a * max(a, 0.0)) - math.exp(-dist.a * max(b, 0.0))
        else:
            raise FittingError(f"no goodness-of-fit support for {dist.kind}")
        expected.append(n * p)

    stat = sum(
        (o - e) ** 2 / e for o, e in zip(observed, expected) if e > 1e-12
    )
    dof = max(1, bins - 1 - n_params)
    return stat, dof


def fit_poisson(samples: Sequence[float]) -> FitReport:
    """MLE for a Poisson count model: lambda-hat is exactly the sample mean."""
    if len(samples) < 2:
        raise FittingError("need at least 2 samples")
    for x in samples:
        if x < 0 or x != int(x):
            raise FittingError(f"Poisson samples must be non-negative integers, got {x!r}")
    lam = math.fsum(samples) / len(samples)
    if lam <= 0:
        raise DegenerateDataError("all counts are zero; use dirac(0)")
    dist = stochastics.poisson(lam)
    stat, dof = _chi_square(samples, dist, n_params=1)
    return FitReport(dist, len(samples), stat, dof)


def fit_normal(samples: Sequence[float]) -> FitReport:
    """MLE mean with the unbiased (n-1) standard deviation."""
    n = len(samples)
    if n < 2:
        raise FittingError("need at least 2 samples")
    mu = math.fsum(samples) / n
    var = math.fsum((x - mu) ** 2 for x in samples) / (n - 1)
    if var == 0.0:
        raise DegenerateDataError(f"all samples equal {mu}; a dirac({mu}) matches exactly")
    dist = stochastics.normal(mu, math.sqrt(var))
    stat, dof = _chi_square(samples, dist, n_params=2)
    return FitReport(dist, n, stat, dof)


def fit_exponential(samples: Sequence[float]) -> FitReport:
    n = len(samples)
    if n < 2:
        raise FittingError("need at least 2 samples")
    if any(x < 0 for x in samples):
        raise FittingError("exponential samples must be non-negative")
    mean = math.fsum(samples) / n
    if mean <= 0:
        raise DegenerateDataError("all samples are zero")
    dist = stochastics.exponential(1.0 / mean)
    stat, dof = _chi_square(samples, dist, n_params=1)
    return FitReport(dist, n, stat, dof)


_FITTERS = {
    stochastics.POISSON: fit_poisson,
    stochastics.NORMAL: fit_normal,
    stochastics.EXPONENTIAL: fit_exponential,
}


def select_fit(samples: Sequence[float], candidates: Sequence[str]) -> FitReport:
    """Fit every candidate kind and keep the lowest chi-square statistic."""
    if len(samples) < 30:
        raise FittingError(f"model selection needs >= 30 samples, got {len(samples)}")
    reports: list[FitReport] = []
    failures: list[str] = []
    for kind in candidates:
        fitter = _FITTERS.get(kind)
        if fitter is None:
            failures.append(f"{kind}: no fitter")
            continue
        try:
            reports.append(fitter(samples))
        except FittingError as exc:
            failures.append(f"{kind}: {exc}")
    if not reports:
        raise FittingError("no candidate distribution fits: " + "; ".join(failures))
    return min(reports, key=lambda r: r.chi_square / r.dof)
