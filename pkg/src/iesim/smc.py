"""Statistical model checking of energy requirements over simulation traces.

Two decision procedures over Bernoulli outcomes of a trace predicate:

* ``sprt``: Wald's sequential probability ratio test of H0: p >= p0 against
  H1: p <= p1 with an indifference region (p1, p0) around the threshold and
  error bounds (alpha, beta).
* ``estimate``: fixed-sample probability estimation; the Hoeffding bound
  gives N = ceil(ln(2/alpha) / (2 delta^2)) samples for |p_hat - p| < delta
  with confidence 1 - alpha.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import clock
from .energy import DeviceProfile, EnergyModelError, LedgerSummary, lifetime
from .engine import Trace
from .modes import OperatingMode
from .scenario import ConfigError, _as_element


class SmcError(ValueError):
    pass


# --------------------------------------------------------------------------
# Requirement properties

SCOPE_WHOLE = "whole-horizon"
SCOPE_WORK = "working-hours"

KIND_LIFETIME = "lifetime_at_least"
KIND_SHARE_AT_LEAST = "mode_timeshare_at_least"
KIND_SHARE_AT_MOST = "mode_timeshare_at_most"


READING_TIME = "time"
READING_ENERGY = "energy"


@dataclass(frozen=True)
class Property:
    """A trace predicate: lifetime or scoped mode duty-cycle thresholds.

    ``device`` selects which device's ledger is judged; "*" means every
    device must satisfy the predicate. Duty-cycle properties default to the
    time-share reading; ``reading="energy"`` switches to the energy-share
    definition (mode energy over total energy, peripherals included), which
    is only meaningful over the whole horizon.
    """

    id: str
    kind: str
    device: str = "*"
    mode: OperatingMode | None = None
    ratio: float | None = None
    hours: float | None = None
    scope: str = SCOPE_WHOLE
    reading: str = READING_TIME

    def __post_init__(self):
        if self.kind == KIND_LIFETIME:
            if self.hours is None or self.hours <= 0:
                raise SmcError(f"{self.id}: lifetime threshold must be positive hours")
        elif self.kind in (KIND_SHARE_AT_LEAST, KIND_SHARE_AT_MOST):
            if self.mode is None:
                raise SmcError(f"{self.id}: time-share property needs a mode")
            if self.ratio is None or not 0.0 <= self.ratio <= 1.0:
                raise SmcError(f"{self.id}: ratio must lie in [0, 1]")
        else:
            raise SmcError(f"{self.id}: unknown property kind {self.kind!r}")
        if self.scope not in (SCOPE_WHOLE, SCOPE_WORK):
            raise SmcError(f"{self.id}: unknown scope {self.scope!r}")
        if self.reading not in (READING_TIME, READING_ENERGY):
            raise SmcError(f"{self.id}: unknown duty-cycle reading {self.reading!r}")
        if self.reading == READING_ENERGY and self.scope != SCOPE_WHOLE:
            raise SmcError(
                f"{self.id}: the energy-share reading prices peripheral events, "
                "which have no sub-window attribution; use the whole-horizon scope"
            )


def _timeshare(ledger, mode: OperatingMode, scope: str) -> float:
    window = ledger.window
    if scope == SCOPE_WORK:
        length = clock.work_overlap(window[0], window[1])
        if length <= 0:
            raise SmcError(f"no working hours inside window {window}")
        if isinstance(ledger, LedgerSummary):
            return ledger.work_mode_seconds(mode) / length
        return ledger.mode_seconds(mode, clock.working_windows(*window)) / length
    length = ledger.window_length()
    if length <= 0:
        raise SmcError("zero-length trace window")
    return ledger.mode_seconds(mode) / length


def evaluate(
    prop: Property,
    trace: Trace | Mapping[str, LedgerSummary],
    profiles: Mapping[str, DeviceProfile],
) -> bool:
    """Decide the property on one trace (or its per-device summaries)."""
    ledgers = trace.summaries() if isinstance(trace, Trace) else trace
    if prop.device == "*":
        targets = sorted(ledgers)
    elif prop.device in ledgers:
        targets = [prop.device]
    else:
        raise SmcError(f"{prop.id}: no device {prop.device!r} in trace")

    for device in targets:
        ledger = ledgers[device]
        if prop.kind == KIND_LIFETIME:
            try:
                value = lifetime(profiles[device], ledger)
            except EnergyModelError as exc:
                raise SmcError(f"{prop.id}: {exc}") from None
            ok = value >= prop.hours
        else:
            if prop.reading == READING_ENERGY:
                from .energy import duty_cycle_energy

                try:
                    share = duty_cycle_energy(ledgers[device], profiles[device], prop.mode)
                except EnergyModelError as exc:
                    raise SmcError(f"{prop.id}: {exc}") from None
            else:
                share = _timeshare(ledger, prop.mode, prop.scope)
            ok = share >= prop.ratio if prop.kind == KIND_SHARE_AT_LEAST else share <= prop.ratio
        if not ok:
            return False
    return True


# --------------------------------------------------------------------------
# Decision procedures

@dataclass(frozen=True)
class SmcConfig:
    alpha: float = 0.05
    beta: float = 0.05
    theta: float = 0.5
    p0: float = 0.55
    p1: float = 0.45
    delta: float = 0.05
    max_samples: int = 100_000

    def __post_init__(self):
        if not (0.0 < self.alpha < 0.5 and 0.0 < self.beta < 0.5):
            raise SmcError(f"error bounds must lie in (0, 0.5), got {self.alpha}, {self.beta}")
        if not 0.0 <= self.p1 <= self.theta <= self.p0 <= 1.0:
            raise SmcError(
                f"need 0 <= p1 <= theta <= p0 <= 1, got p1={self.p1}, theta={self.theta}, p0={self.p0}"
            )
        if self.delta <= 0:
            raise SmcError("precision delta must be positive")
        if self.max_samples < 1:
            raise SmcError("max_samples must be at least 1")


ACCEPT_H0 = "AcceptH0"
ACCEPT_H1 = "AcceptH1"
ESTIMATE = "Estimate"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Verdict:
    kind: str
    samples_used: int
    p_hat: float
    config: SmcConfig

    def __post_init__(self):
        if self.samples_used < 1:
            raise SmcError("a verdict needs at least one sample")
        if not 0.0 <= self.p_hat <= 1.0:
            raise SmcError("estimate outside [0, 1]")

    @property
    def holds(self) -> bool:
        """Does the verdict support 'probability >= theta'?"""
        if self.kind == ACCEPT_H0:
            return True
        if self.kind == ESTIMATE:
            return self.p_hat >= self.config.theta
        return False


Sampler = Callable[[int], bool]
"""Maps a sample index to the property outcome of one fresh replica."""


def sprt(sampler: Sampler, cfg: SmcConfig) -> Verdict:
    """Wald's SPRT of H0: p >= p0 against H1: p <= p1.

    The log-likelihood ratio of p1 vs p0 accumulates per Bernoulli outcome;
    crossing ln((1-beta)/alpha) accepts H1, crossing ln(beta/(1-alpha))
    accepts H0. Runs out of budget -> inconclusive with the running mean.
    """
    if not cfg.p1 < cfg.p0:
        raise SmcError("SPRT needs a non-empty indifference region (p1 < p0)")
    upper = math.log((1.0 - cfg.beta) / cfg.alpha)
    lower = math.log(cfg.beta / (1.0 - cfg.alpha))
    llr = 0.0
    successes = 0
    step_true = math.log(cfg.p1 / cfg.p0)
    step_false = math.log((1.0 - cfg.p1) / (1.0 - cfg.p0))
    for n in range(1, cfg.max_samples + 1):
        outcome = bool(sampler(n - 1))
        successes += outcome
        llr += step_true if outcome else step_false
        if llr >= upper:
            return Verdict(ACCEPT_H1, n, successes / n, cfg)
        if llr <= lower:
            return Verdict(ACCEPT_H0, n, successes / n, cfg)
    return Verdict(INCONCLUSIVE, cfg.max_samples, successes / cfg.max_samples, cfg)


def hoeffding_sample_size(delta: float, alpha: float) -> int:
    """Samples needed so that Pr(|p_hat - p| < delta) >= 1 - alpha."""
    if delta <= 0 or not 0 < alpha < 1:
        raise SmcError("need delta > 0 and alpha in (0, 1)")
    return math.ceil(math.log(2.0 / alpha) / (2.0 * delta * delta))


def estimate(sampler: Sampler, delta: float, alpha: float, cfg: SmcConfig | None = None) -> Verdict:
    """Chernoff-Hoeffding probability estimation at precision delta."""
    n = hoeffding_sample_size(delta, alpha)
    successes = sum(bool(sampler(i)) for i in range(n))
    base = cfg or SmcConfig()
    return Verdict(ESTIMATE, n, successes / n, base)


# --------------------------------------------------------------------------
# Requirements files

_MODES_BY_NAME = {str(mode): mode for mode in OperatingMode}
_MODES_BY_NAME.update({str(mode).lower(): mode for mode in OperatingMode})
_MODES_BY_NAME.update({str(mode).upper(): mode for mode in OperatingMode})


@dataclass(frozen=True)
class Requirement:
    prop: Property
    method: str = "estimate"  # "estimate" | "sprt"
    theta: float = 0.5
    indifference: float = 0.1

    def smc_config(self, base: SmcConfig) -> SmcConfig:
        half = self.indifference / 2.0
        return SmcConfig(
            alpha=base.alpha,
            beta=base.beta,
            theta=self.theta,
            p0=min(1.0, self.theta + half),
            p1=max(0.0, self.theta - half),
            delta=base.delta,
            max_samples=base.max_samples,
        )


@dataclass(frozen=True)
class RequirementSet:
    requirements: tuple[Requirement, ...]
    alpha: float = 0.05
    beta: float = 0.05
    delta: float = 0.05
    horizon_s: float = 7 * clock.DAY_S


def parse_requirements(document) -> RequirementSet:
    root = _as_element(document)
    if root.tag != "requirements":
        raise ConfigError(f"expected <requirements> root, found <{root.tag}>")
    alpha = float(root.get("alpha", "0.05"))
    beta = float(root.get("beta", "0.05"))
    delta = float(root.get("delta", "0.05"))
    horizon = float(root.get("horizon-s", str(7 * clock.DAY_S)))
    reqs = []
    for el in root.findall("requirement"):
        rid = el.get("id")
        kind = el.get("type")
        if not rid or not kind:
            raise ConfigError("<requirement> needs id and type attributes")
        mode = None
        if el.get("mode"):
            mode = _MODES_BY_NAME.get(el.get("mode"))
            if mode is None:
                raise ConfigError(f"{rid}: unknown mode {el.get('mode')!r}")
        prop = Property(
            id=rid,
            kind=kind,
            device=el.get("device", "*"),
            mode=mode,
            ratio=float(el.get("ratio")) if el.get("ratio") else None,
            hours=float(el.get("hours")) if el.get("hours") else None,
            scope=el.get("scope", SCOPE_WHOLE),
            reading=el.get("reading", READING_TIME),
        )
        reqs.append(
            Requirement(
                prop=prop,
                method=el.get("method", "estimate"),
                theta=float(el.get("theta", "0.5")),
                indifference=float(el.get("indifference", "0.1")),
            )
        )
    if not reqs:
        raise ConfigError("requirements file lists no requirements")
    return RequirementSet(tuple(reqs), alpha, beta, delta, horizon)


# --------------------------------------------------------------------------
# End-to-end verification

@dataclass
class RequirementResult:
    requirement: Requirement
    verdict: Verdict


@dataclass
class VerificationReport:
    results: list[RequirementResult]
    device_tables: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return all(r.verdict.holds for r in self.results)

    def to_csv_rows(self) -> list[str]:
        rows = ["requirement,verdict,p_hat,samples"]
        for r in self.results:
            rows.append(
                f"{r.requirement.prop.id},{r.verdict.kind},{r.verdict.p_hat:.6f},{r.verdict.samples_used}"
            )
        return rows


def verify_requirements(
    system,
    reqset: RequirementSet,
    profiles: Mapping[str, DeviceProfile],
    *,
    root_seed: int,
    horizon: float | None = None,
    jobs: int = 1,
    max_samples: int | None = None,
) -> VerificationReport:
    """Estimate/decide every requirement over a shared pool of replicas.

    All requirements are judged on the same replica pool (one simulation per
    sample index), so a report costs max-over-requirements samples rather
    than their sum. Replica i always uses the same derived seed, keeping
    verdicts reproducible for a root seed.
    """
    from . import engine

    horizon = horizon or reqset.horizon_s
    base = SmcConfig(
        alpha=reqset.alpha,
        beta=reqset.beta,
        delta=reqset.delta,
        max_samples=max_samples if max_samples is not None else 100_000,
    )

    for req in reqset.requirements:
        if req.method not in ("estimate", "sprt"):
            raise SmcError(f"{req.prop.id}: unknown method {req.method!r}")

    pool: list[dict[str, LedgerSummary]] = []

    def extend_pool(upto: int) -> None:
        if upto <= len(pool):
            return
        fresh = engine.replicate(
            system,
            horizon,
            upto - len(pool),
            root_seed,
            record="summary",
            jobs=jobs,
            first_index=len(pool),
        )
        pool.extend(tr.summaries() for tr in fresh)

    # estimates know their sample count up front; fetch in one batch
    estimate_needed = max(
        (
            hoeffding_sample_size(reqset.delta, reqset.alpha)
            for req in reqset.requirements
            if req.method == "estimate"
        ),
        default=0,
    )
    extend_pool(estimate_needed)

    results = []
    for req in reqset.requirements:
        cfg = req.smc_config(base)

        def sampler(i: int) -> bool:
            extend_pool(i + 1)
            return evaluate(req.prop, pool[i], profiles)

        if req.method == "estimate":
            verdict = estimate(sampler, reqset.delta, reqset.alpha, cfg)
        else:
            verdict = sprt(sampler, cfg)
        results.append(RequirementResult(req, verdict))

    report = VerificationReport(results)
    if pool:
        report.device_tables = summarize_pool(pool, profiles)
    return report


def summarize_pool(
    pool: Sequence[Mapping[str, LedgerSummary]], profiles: Mapping[str, DeviceProfile]
) -> dict[str, dict[str, float]]:
    """Per-device means over the replica pool: duty cycles and lifetime."""
    from .energy import duty_cycle_energy, total_energy

    out: dict[str, dict[str, float]] = {}
    devices = sorted(pool[0])
    for device in devices:
        acc: dict[str, float] = {}
        for summaries in pool:
            ledger = summaries[device]
            profile = profiles[device]
            acc["lifetime_h"] = acc.get("lifetime_h", 0.0) + lifetime(profile, ledger)
            acc["energy_j"] = acc.get("energy_j", 0.0) + total_energy(ledger, profile)
            for mode in OperatingMode:
                acc[f"dt_{mode}"] = acc.get(f"dt_{mode}", 0.0) + _timeshare(
                    ledger, mode, SCOPE_WHOLE
                )
                acc[f"dt_work_{mode}"] = acc.get(f"dt_work_{mode}", 0.0) + _timeshare(
                    ledger, mode, SCOPE_WORK
                )
                acc[f"de_{mode}"] = acc.get(f"de_{mode}", 0.0) + duty_cycle_energy(
                    ledger, profile, mode
                )
        out[device] = {k: v / len(pool) for k, v in acc.items()}
    return out


def working_hours_windows(horizon: float) -> list[tuple[float, float]]:
    return clock.working_windows(0.0, horizon)
