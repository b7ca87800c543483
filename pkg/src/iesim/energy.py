"""Energy accounting over recorded mode traces.

Implements the three ledger analytics the rest of the system is built on:
per-mode energy summation, duty cycles (both the energy-share and the
time-share reading) and battery lifetime from average power draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .modes import MODES, OperatingMode


class EnergyModelError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceProfile:
    """Electrical characteristics of one device type.

    Currents are amperes per operating mode, voltages default to ``vcc``,
    battery capacity is ampere-hours. ``peripheral_costs`` maps peripheral
    event names to a fixed energy cost in joules per occurrence.
    """

    name: str
    current_a: Mapping[OperatingMode, float]
    vcc: float
    battery_capacity_ah: float
    voltage_v: Mapping[OperatingMode, float] = field(default_factory=dict)
    peripheral_costs_j: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        missing = [m for m in MODES if m not in self.current_a]
        if missing:
            raise EnergyModelError(f"profile {self.name}: no current for {missing}")
        for m, i in self.current_a.items():
            if i <= 0:
                raise EnergyModelError(f"profile {self.name}: current({m}) must be > 0")
        for m, v in self.voltage_v.items():
            if v <= 0:
                raise EnergyModelError(f"profile {self.name}: voltage({m}) must be > 0")
        if self.vcc <= 0 or self.battery_capacity_ah <= 0:
            raise EnergyModelError(f"profile {self.name}: vcc and battery capacity must be > 0")
        lpm = self.current_a[OperatingMode.LPM]
        if lpm >= self.current_a[OperatingMode.RX] or lpm >= self.current_a[OperatingMode.TX]:
            raise EnergyModelError(
                f"profile {self.name}: LPM current must be below Rx and Tx currents"
            )

    def voltage(self, mode: OperatingMode) -> float:
        return self.voltage_v.get(mode, self.vcc)

    def power_w(self, mode: OperatingMode) -> float:
        return self.current_a[mode] * self.voltage(mode)


@dataclass(frozen=True)
class ModeInterval:
    mode: OperatingMode
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class EnergyLedger:
    """Timestamped mode intervals plus peripheral events for one device."""

    device: str
    window: tuple[float, float]
    intervals: list[ModeInterval] = field(default_factory=list)
    peripheral_events: list[tuple[float, str]] = field(default_factory=list)

    def validate(self) -> None:
        t0, t1 = self.window
        if t1 < t0:
            raise EnergyModelError(f"ledger {self.device}: window ends before it starts")
        prev_end = t0
        for iv in self.intervals:
            if iv.duration < 0:
                raise EnergyModelError(f"ledger {self.device}: negative interval duration")
            if iv.start < prev_end - 1e-9 or iv.end > t1 + 1e-9:
                raise EnergyModelError(
                    f"ledger {self.device}: interval [{iv.start}, {iv.end}] overlaps or "
                    f"escapes window [{t0}, {t1}]"
                )
            prev_end = max(prev_end, iv.end)

    def window_length(self) -> float:
        return self.window[1] - self.window[0]

    def mode_count(self, mode: OperatingMode) -> int:
        return sum(1 for iv in self.intervals if iv.mode is mode)

    def mode_seconds(self, mode: OperatingMode, windows: Sequence[tuple[float, float]] | None = None) -> float:
        if windows is None:
            return math.fsum(iv.duration for iv in self.intervals if iv.mode is mode)
        total = 0.0
        for iv in self.intervals:
            if iv.mode is not mode:
                continue
            for a, b in windows:
                lo, hi = max(iv.start, a), min(iv.end, b)
                if hi > lo:
                    total += hi - lo
        return total

    def peripheral_energy(self, profile: DeviceProfile) -> float:
        total = 0.0
        for _, event in self.peripheral_events:
            try:
                total += profile.peripheral_costs_j[event]
            except KeyError:
                raise EnergyModelError(
                    f"ledger {self.device}: no peripheral cost for event {event!r} "
                    f"in profile {profile.name}"
                ) from None
        return total


@dataclass
class LedgerSummary:
    """Aggregated form of a ledger: per-mode seconds split into the whole
    window and its working-hours part, plus peripheral event counts.

    Produced by the simulation core when full interval lists are not needed
    (bulk statistical runs); supports the same analytics.
    """

    device: str
    window: tuple[float, float]
    mode_seconds_total: dict[OperatingMode, float]
    mode_seconds_work: dict[OperatingMode, float]
    peripheral_counts: dict[str, int] = field(default_factory=dict)

    def window_length(self) -> float:
        return self.window[1] - self.window[0]

    def mode_seconds(self, mode: OperatingMode, windows: Sequence[tuple[float, float]] | None = None) -> float:
        if windows is not None:
            raise EnergyModelError(
                "a summary ledger only supports whole-window or working-hours scopes"
            )
        return self.mode_seconds_total.get(mode, 0.0)

    def work_mode_seconds(self, mode: OperatingMode) -> float:
        return self.mode_seconds_work.get(mode, 0.0)

    def peripheral_energy(self, profile: DeviceProfile) -> float:
        total = 0.0
        for event, count in self.peripheral_counts.items():
            try:
                total += count * profile.peripheral_costs_j[event]
            except KeyError:
                raise EnergyModelError(
                    f"summary {self.device}: no peripheral cost for event {event!r} "
                    f"in profile {profile.name}"
                ) from None
        return total


Ledger = EnergyLedger | LedgerSummary


def mode_energy(ledger: Ledger, profile: DeviceProfile, mode: OperatingMode) -> float:
    """Joules spent in one mode: sum of I * V * dt over its intervals."""
    return profile.power_w(mode) * ledger.mode_seconds(mode)


def total_energy(ledger: Ledger, profile: DeviceProfile) -> float:
    """Joules over all four modes plus peripheral events."""
    modes = math.fsum(mode_energy(ledger, profile, m) for m in MODES)
    return modes + ledger.peripheral_energy(profile)


def duty_cycle_energy(ledger: Ledger, profile: DeviceProfile, mode: OperatingMode) -> float:
    """Energy-share duty cycle: mode energy over total energy."""
    etot = total_energy(ledger, profile)
    if etot <= 0.0:
        raise EnergyModelError(f"ledger {ledger.device}: duty cycle undefined, total energy is 0")
    return mode_energy(ledger, profile, mode) / etot


def duty_cycle_time(
    ledger: Ledger,
    mode: OperatingMode,
    windows: Sequence[tuple[float, float]] | None = None,
) -> float:
    """Time-share duty cycle: mode seconds over (scoped) window length."""
    if windows is None:
        length = ledger.window_length()
        seconds = ledger.mode_seconds(mode)
    else:
        length = math.fsum(b - a for a, b in windows)
        seconds = ledger.mode_seconds(mode, windows)
    if length <= 0.0:
        raise EnergyModelError(f"ledger {ledger.device}: zero-length duty-cycle window")
    return seconds / length


def lifetime(profile: DeviceProfile, ledger: Ledger) -> float:
    """Battery lifetime in hours at the ledger's average power draw.

    Battery energy (C_batt * Vcc, in watt-hours) divided by the average
    power over the observation window.
    """
    horizon = ledger.window_length()
    if horizon <= 0.0:
        raise EnergyModelError(f"ledger {ledger.device}: zero-length window")
    etot = total_energy(ledger, profile)
    if etot <= 0.0:
        raise EnergyModelError(f"ledger {ledger.device}: zero energy, lifetime undefined")
    avg_power_w = etot / horizon
    return profile.battery_capacity_ah * profile.vcc / avg_power_w


def concat_ledgers(parts: Iterable[EnergyLedger]) -> EnergyLedger:
    """Concatenate ledgers over adjacent disjoint windows."""
    parts = sorted(parts, key=lambda led: led.window[0])
    if not parts:
        raise EnergyModelError("nothing to concatenate")
    device = parts[0].device
    for led in parts:
        if led.device != device:
            raise EnergyModelError("cannot concatenate ledgers of different devices")
    out = EnergyLedger(device, (parts[0].window[0], parts[-1].window[1]))
    for led in parts:
        out.intervals.extend(led.intervals)
        out.peripheral_events.extend(led.peripheral_events)
    out.validate()
    return out
