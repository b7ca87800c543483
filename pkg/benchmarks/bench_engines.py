#!/usr/bin/env python3
"""Benchmark: compiled kernel vs pure-Python core on the shipped building.

Usage: python benchmarks/bench_engines.py [--horizon-h 6] [--replicas 3]
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from iesim import builder, engine, lowering, scenario as scn
from iesim.cli import default_scenario_path


def bench(core, seeds, horizon, record):
    times = []
    events = 0
    for seed in seeds:
        t0 = time.perf_counter()
        raw = core.run(seed, horizon, record)
        times.append(time.perf_counter() - t0)
        if record == "full":
            events = max(events, len(raw.event_time))
    return statistics.median(times), events


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--horizon-h", type=float, default=6.0)
    ap.add_argument("--replicas", type=int, default=3)
    args = ap.parse_args()

    sc = scn.load_scenario(default_scenario_path())
    program = lowering.lower(builder.system_from_scenario(sc))
    horizon = args.horizon_h * 3600.0
    seeds = list(range(100, 100 + args.replicas))

    print(f"scenario: {sc.name}, horizon {args.horizon_h:g} h, {args.replicas} replicas")
    if not engine.kernel_available():
        print("compiled kernel not available; only the pure-Python core will run")

    results = {}
    for name in ("python", "kernel") if engine.kernel_available() else ("python",):
        core = engine.make_core(program, name)
        for record in ("full", "summary"):
            t, events = bench(core, seeds, horizon, record)
            results[(name, record)] = t
            rate = events / t / 1e6 if events else float("nan")
            extra = f", {events} events, {rate:.2f} M events/s" if record == "full" else ""
            print(f"{name:7s} {record:8s}: {t * 1000:9.1f} ms median{extra}")

    if ("kernel", "full") in results:
        for record in ("full", "summary"):
            speedup = results[("python", record)] / results[("kernel", record)]
            print(f"speedup ({record}): {speedup:.1f}x")


if __name__ == "__main__":
    main()
