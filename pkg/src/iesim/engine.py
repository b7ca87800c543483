"""Discrete-event execution of a SystemModel over simulated wall-clock time.

The heavy lifting happens in one of two interchangeable cores over the
lowered program: the compiled kernel (iesim._kernel, built from Cython) or
its pure-Python twin. The kernel is preferred when importable; set
IESIM_PURE_PYTHON=1 to force the fallback. Both produce bit-identical
traces for the same (system, seed).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from ._engine_py import DeadlockError, PurePythonCore, RawRun
from .clock import work_seconds_before
from .energy import EnergyLedger, LedgerSummary, ModeInterval
from .lowering import Program, lower
from .model import SystemModel
from .modes import MODES
from .rng import child_seed

try:  # pragma: no cover - depends on the build environment
    from . import _kernel as _kernel_mod
except ImportError:  # pragma: no cover
    _kernel_mod = None

_FORCE_PURE = os.environ.get("IESIM_PURE_PYTHON", "") not in ("", "0")


def kernel_available() -> bool:
    return _kernel_mod is not None


def active_core_name() -> str:
    return "python" if (_FORCE_PURE or _kernel_mod is None) else "kernel"


def make_core(program: Program, core: str | None = None):
    """Instantiate a simulation core ("kernel", "python" or None = default)."""
    if core is None:
        core = active_core_name()
    if core == "kernel":
        if _kernel_mod is None:
            raise RuntimeError("compiled kernel not available; build the extension")
        return _kernel_mod.KernelCore(program)
    if core == "python":
        return PurePythonCore(program)
    raise ValueError(f"unknown core {core!r}")


@dataclass(frozen=True)
class PowertraceConfig:
    """Periodic per-mode tick reporting, rtimer_hz hardware ticks per second."""

    period: float = 1.0
    rtimer_hz: int = 32768

    def __post_init__(self):
        if self.period <= 0 or self.rtimer_hz <= 0:
            raise ValueError("powertrace period and rtimer_hz must be positive")


class Trace:
    """Result of one simulation replica.

    Full-record traces expose per-device ledgers and the global event log;
    summary-record traces only per-device aggregates (bulk statistical runs).
    """

    def __init__(self, program: Program, raw: RawRun, horizon: float, seed: int, record: str):
        self._program = program
        self._raw = raw
        self.horizon = horizon
        self.seed = seed
        self.record = record
        self.env_m = raw.env_m
        self.devices: list[str] = list(program.device_names)
        self._ledgers: dict[str, EnergyLedger] | None = None

    @property
    def is_full(self) -> bool:
        return self.record == "full"

    @property
    def ledgers(self) -> dict[str, EnergyLedger]:
        if not self.is_full:
            raise ValueError("summary traces carry no interval ledgers")
        if self._ledgers is None:
            raw, p = self._raw, self._program
            ledgers = {
                name: EnergyLedger(name, (0.0, self.horizon)) for name in self.devices
            }
            for dev, mode, start, dur in zip(
                raw.interval_dev, raw.interval_mode, raw.interval_start, raw.interval_dur
            ):
                ledgers[p.device_names[dev]].intervals.append(
                    ModeInterval(MODES[mode], start, dur)
                )
            for t, dev, ev in zip(raw.per_time, raw.per_dev, raw.per_event):
                ledgers[p.device_names[dev]].peripheral_events.append(
                    (t, p.event_names[ev])
                )
            self._ledgers = ledgers
        return self._ledgers

    @property
    def events(self) -> list[tuple[float, str, str]]:
        """Global event log as (time, component id, transition label)."""
        if not self.is_full:
            raise ValueError("summary traces carry no event log")
        raw, p = self._raw, self._program
        return [
            (t, p.comp_ids[c], p.label_names[l])
            for t, c, l in zip(raw.event_time, raw.event_comp, raw.event_label)
        ]

    def summaries(self) -> dict[str, LedgerSummary]:
        raw, p = self._raw, self._program
        out: dict[str, LedgerSummary] = {}
        n_ev = len(p.event_names)
        if self.is_full:
            total = [0.0] * (len(self.devices) * 4)
            work = [0.0] * (len(self.devices) * 4)
            counts = [0] * (len(self.devices) * n_ev)
            for dev, mode, start, dur in zip(
                raw.interval_dev, raw.interval_mode, raw.interval_start, raw.interval_dur
            ):
                total[dev * 4 + mode] += dur
                work[dev * 4 + mode] += work_seconds_before(start + dur) - work_seconds_before(start)
            for dev, ev in zip(raw.per_dev, raw.per_event):
                counts[dev * n_ev + ev] += 1
        else:
            total, work, counts = raw.mode_total, raw.mode_work, raw.per_counts
        for di, name in enumerate(self.devices):
            out[name] = LedgerSummary(
                device=name,
                window=(0.0, self.horizon),
                mode_seconds_total={m: total[di * 4 + k] for k, m in enumerate(MODES)},
                mode_seconds_work={m: work[di * 4 + k] for k, m in enumerate(MODES)},
                peripheral_counts={
                    p.event_names[e]: counts[di * n_ev + e]
                    for e in range(n_ev)
                    if counts[di * n_ev + e]
                },
            )
        return out

    def interval_rows(self) -> list[tuple[float, str, str, float]]:
        """Time-sorted (start, device, mode, duration) rows for export."""
        raw, p = self._raw, self._program
        rows = [
            (start, p.device_names[dev], str(MODES[mode]), dur)
            for dev, mode, start, dur in zip(
                raw.interval_dev, raw.interval_mode, raw.interval_start, raw.interval_dur
            )
        ]
        rows.sort(key=lambda r: (r[0], r[1]))
        return rows


def run(
    system: SystemModel | Program,
    horizon: float,
    seed: int,
    *,
    record: str = "full",
    core: str | None = None,
) -> Trace:
    """Execute one replica until the horizon (seconds)."""
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if record not in ("full", "summary"):
        raise ValueError(f"unknown record mode {record!r}")
    program = system if isinstance(system, Program) else lower(system)
    raw = make_core(program, core).run(seed, horizon, record)
    return Trace(program, raw, horizon, seed, record)


_POOL_STATE: dict = {}


def _pool_init(program: Program, horizon: float, record: str, core: str | None):
    _POOL_STATE["core"] = make_core(program, core)
    _POOL_STATE["program"] = program
    _POOL_STATE["horizon"] = horizon
    _POOL_STATE["record"] = record


def _pool_run(seed: int) -> RawRun:
    return _POOL_STATE["core"].run(seed, _POOL_STATE["horizon"], _POOL_STATE["record"])


def replica_seeds(root_seed: int, n: int, first_index: int = 0) -> list[int]:
    return [child_seed(root_seed, first_index + i) for i in range(n)]


def replicate(
    system: SystemModel | Program,
    horizon: float,
    n: int,
    root_seed: int,
    *,
    record: str = "summary",
    core: str | None = None,
    jobs: int = 1,
    first_index: int = 0,
) -> list[Trace]:
    """n independent replicas from derived substream seeds.

    Replica i always runs with seed child_seed(root_seed, first_index + i),
    so the result list is independent of worker count, execution order and
    batching.
    """
    if n < 1:
        raise ValueError("need at least one replica")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    program = system if isinstance(system, Program) else lower(system)
    seeds = replica_seeds(root_seed, n, first_index)

    if jobs <= 1 or n == 1:
        replica_core = make_core(program, core)
        raws = [replica_core.run(s, horizon, record) for s in seeds]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(
            max_workers=jobs,
            initializer=_pool_init,
            initargs=(program, horizon, record, core),
        ) as pool:
            raws = list(pool.map(_pool_run, seeds, chunksize=max(1, n // (jobs * 8))))

    return [Trace(program, raw, horizon, s, record) for raw, s in zip(raws, seeds)]


def powertrace_log(
    trace: Trace, ptcfg: PowertraceConfig = PowertraceConfig()
) -> list[tuple[float, str, int, int, int, int]]:
    """Cumulative per-mode tick counts sampled every reporting period.

    Row layout: (time_s, device, cpu_ticks, lpm_ticks, tx_ticks, rx_ticks);
    every column is monotone non-decreasing per device.
    """
    raw, p = trace._raw, trace._program
    n_samples = int(trace.horizon / ptcfg.period)
    if n_samples < 1:
        return []

    by_dev: dict[int, list[tuple[float, int, float]]] = {d: [] for d in range(len(p.device_names))}
    for dev, mode, start, dur in zip(
        raw.interval_dev, raw.interval_mode, raw.interval_start, raw.interval_dur
    ):
        by_dev[dev].append((start, mode, dur))

    records = []
    for di in sorted(by_dev):
        name = p.device_names[di]
        intervals = sorted(by_dev[di])
        acc = [0.0, 0.0, 0.0, 0.0]
        idx = 0
        for k in range(1, n_samples + 1):
            t = k * ptcfg.period
            while idx < len(intervals) and intervals[idx][0] + intervals[idx][2] <= t:
                start, mode, dur = intervals[idx]
                acc[mode] += dur
                idx += 1
            partial = [0.0, 0.0, 0.0, 0.0]
            j = idx
            while j < len(intervals) and intervals[j][0] < t:
                start, mode, dur = intervals[j]
                partial[mode] += t - start
                j += 1
            ticks = [int((acc[m] + partial[m]) * ptcfg.rtimer_hz) for m in range(4)]
            # column order per the export contract: cpu, lpm, tx, rx
            records.append((t, name, ticks[1], ticks[0], ticks[2], ticks[3]))
    records.sort(key=lambda r: (r[0], r[1]))
    return records


def write_trace_csv(trace: Trace, path) -> None:
    """CSV export: time_s,device,mode,duration_s with 6 fractional digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time_s,device,mode,duration_s\n")
        for start, device, mode, dur in trace.interval_rows():
            fh.write(f"{start:.6f},{device},{mode},{dur:.6f}\n")


def write_powertrace_csv(
    trace: Trace, path, ptcfg: PowertraceConfig = PowertraceConfig()
) -> None:
    """CSV export: time_s,device,cpu,lpm,tx,rx cumulative rtimer ticks."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time_s,device,cpu,lpm,tx,rx\n")
        for t, device, cpu, lpm, tx, rx in powertrace_log(trace, ptcfg):
            fh.write(f"{t:.6f},{device},{cpu},{lpm},{tx},{rx}\n")


__all__ = [
    "DeadlockError",
    "PowertraceConfig",
    "Trace",
    "active_core_name",
    "kernel_available",
    "make_core",
    "powertrace_log",
    "replica_seeds",
    "replicate",
    "run",
    "write_powertrace_csv",
    "write_trace_csv",
]
