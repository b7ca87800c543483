"""Command-line front end.

Subcommands: validate-config, simulate, fit, verify, sweep, report.
Exit codes: 0 success / requirements hold, 1 requirement violated,
2 usage or validation error, 3 runtime failure (deadlock).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import defaultdict
from pathlib import Path

from . import builder, effects, engine, fitting, scenario as scn, smc
from .energy import DeviceProfile, duty_cycle_energy, lifetime, total_energy
from .modes import MODES

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400, "w": 604800}


def parse_duration(text: str) -> float:
    """Durations as <int><unit> with s/m/h/d/w units ("36h", "1w")."""
    text = text.strip()
    if text and text[-1] in _UNITS:
        scale = _UNITS[text[-1]]
        number = text[:-1]
    else:
        scale = 1
        number = text
    try:
        value = int(number)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bad duration {text!r}; expected <int><unit> with unit in s/m/h/d/w"
        ) from None
    return float(value * scale)


def default_scenario_path() -> Path:
    return Path(__file__).parent / "data" / "bms_default.xml"


def default_requirements_path() -> Path:
    return Path(__file__).parent / "data" / "bms_requirements.xml"


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("IESIM_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise scn.ConfigError(f"IESIM_SEED={env!r} is not an integer") from None
    return 1


def _device_profiles(sc: scn.Scenario) -> dict[str, DeviceProfile]:
    return {d.id: sc.profiles[d.device_type] for d in sc.topology.devices}


def _summary_rows(summaries, profiles) -> list[dict]:
    rows = []
    for device in sorted(summaries):
        ledger = summaries[device]
        profile = profiles[device]
        row = {
            "device": device,
            "profile": profile.name,
            "total_energy_j": f"{total_energy(ledger, profile):.6f}",
            "lifetime_h": f"{lifetime(profile, ledger):.6f}",
        }
        for mode in MODES:
            row[f"dt_time_{mode}"] = f"{smc._timeshare(ledger, mode, smc.SCOPE_WHOLE):.6f}"
        for mode in MODES:
            try:
                work = f"{smc._timeshare(ledger, mode, smc.SCOPE_WORK):.6f}"
            except smc.SmcError:
                work = "nan"  # window ends before any working hours
            row[f"dt_work_{mode}"] = work
        for mode in MODES:
            row[f"de_{mode}"] = f"{duty_cycle_energy(ledger, profile, mode):.6f}"
        rows.append(row)
    return rows


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# --------------------------------------------------------------------------
# subcommands

def cmd_validate_config(args) -> int:
    try:
        sc = scn.load_scenario(args.scenario)
        effects.Calibration(dict(sc.calibration))
    except scn.ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{args.scenario}: OK ({sc.name}, {len(sc.topology.devices)} devices)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = scn.load_scenario(args.scenario)
    system = builder.system_from_scenario(sc)
    profiles = _device_profiles(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = _seed(args)
    try:
        trace = engine.run(system, args.horizon, seed, record="full")
    except engine.DeadlockError as exc:
        snap_path = out / "deadlock_snapshot.json"
        snap_path.write_text(json.dumps(exc.snapshot, indent=2, sort_keys=True))
        print(f"deadlock: {exc}; state snapshot at {snap_path}", file=sys.stderr)
        return EXIT_RUNTIME

    engine.write_trace_csv(trace, out / "trace.csv")
    engine.write_powertrace_csv(
        trace, out / "powertrace.csv", engine.PowertraceConfig(period=args.powertrace_period)
    )
    rows = _summary_rows(trace.summaries(), profiles)
    _write_csv(out / "energy_summary.csv", rows)
    print(
        f"simulated {args.horizon:.0f}s of {sc.name} (seed {seed}, core "
        f"{engine.active_core_name()}, m={trace.env_m:g}); wrote "
        f"{len(rows)} device summaries to {out}"
    )
    return EXIT_OK


def cmd_fit(args) -> int:
    sc = scn.load_scenario(args.scenario)
    type_of = {d.id: d.device_type for d in sc.topology.devices}
    samples: dict[tuple[str, str], list[float]] = defaultdict(list)
    with open(args.trace, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            dtype = type_of.get(row["device"])
            if dtype is None:
                continue
            samples[(dtype, row["mode"])].append(float(row["duration_s"]))

    # transmit/processing dwell is characterized by quantized Poisson counts,
    # listening/sleeping dwell by normals; the preferred family is kept
    # whenever it fits and model selection is only a fallback
    mode_candidates = {
        "Tx": ("poisson", "normal"),
        "CPU": ("poisson", "normal"),
        "Rx": ("normal", "exponential"),
        "LPM": ("normal", "exponential"),
    }
    quantum = 0.001

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    import xml.etree.ElementTree as ET

    fits_el = ET.Element("calibration-fits", quantum=str(quantum))
    for (dtype, mode), values in sorted(samples.items()):
        if len(values) < 30:
            continue
        candidates = mode_candidates[mode]
        data = values
        if candidates[0] == "poisson":
            data = [round(v / quantum) for v in values]
        try:
            if candidates[0] == "poisson":
                report = fitting.fit_poisson(data)
            else:
                report = fitting.fit_normal(data)
        except fitting.FittingError:
            try:
                report = fitting.select_fit(data, candidates)
            except fitting.FittingError as exc:
                print(f"fit {dtype}/{mode}: {exc}", file=sys.stderr)
                continue
        dist = report.distribution
        rows.append(
            {
                "device_type": dtype,
                "mode": mode,
                "kind": dist.kind,
                "param_a": f"{dist.a:.9g}",
                "param_b": f"{dist.b:.9g}",
                "quantum": f"{quantum if dist.kind == 'poisson' else 1.0:.9g}",
                "samples": report.sample_count,
                "chi_square": f"{report.chi_square:.6f}",
                "dof": report.dof,
            }
        )
        ET.SubElement(
            fits_el,
            "fit",
            {
                "device-type": dtype,
                "mode": mode,
                "kind": dist.kind,
                "a": f"{dist.a:.9g}",
                "b": f"{dist.b:.9g}",
            },
        )
    if not rows:
        print("no (device type, mode) series had the 30+ samples fitting needs", file=sys.stderr)
        return EXIT_USAGE
    _write_csv(out / "fits.csv", rows)
    ET.ElementTree(fits_el).write(out / "fits.xml", encoding="unicode")
    print(f"wrote {len(rows)} fits to {out / 'fits.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    sc = scn.load_scenario(args.scenario)
    reqset = smc.parse_requirements(args.requirements)
    if args.delta is not None or args.alpha is not None:
        reqset = smc.RequirementSet(
            reqset.requirements,
            alpha=args.alpha if args.alpha is not None else reqset.alpha,
            beta=reqset.beta,
            delta=args.delta if args.delta is not None else reqset.delta,
            horizon_s=reqset.horizon_s,
        )
    system = builder.system_from_scenario(sc)
    profiles = _device_profiles(sc)
    horizon = args.horizon if args.horizon else reqset.horizon_s
    try:
        report = smc.verify_requirements(
            system, reqset, profiles,
            root_seed=_seed(args), horizon=horizon, jobs=args.jobs,
        )
    except engine.DeadlockError as exc:
        print(f"deadlock during sampling: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    width = max(len(r.requirement.prop.id) for r in report.results)
    for res in report.results:
        v = res.verdict
        status = "holds" if v.holds else "VIOLATED"
        print(
            f"{res.requirement.prop.id:<{width}}  {v.kind:<12} p_hat={v.p_hat:.4f} "
            f"samples={v.samples_used:<6} -> {status}"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verdicts.csv").write_text(
            "\n".join(report.to_csv_rows()) + "\n", encoding="utf-8"
        )
        if report.device_tables:
            rows = [
                {"device": dev, **{k: f"{v:.6f}" for k, v in table.items()}}
                for dev, table in sorted(report.device_tables.items())
            ]
            _write_csv(out / "device_summary.csv", rows)
    return EXIT_OK if report.all_hold else EXIT_VIOLATED


SWEEP_VALUES = {
    "rdc-protocol": list(scn.RDC_PROTOCOLS),
    "rdc-frequency": list(range(2, 33, 2)),
    "retransmissions": list(range(0, 6)),
    "service-protocol": list(scn.SERVICE_PROTOCOLS),
    "header-size": list(range(32, 65, 2)),
    "interference": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
}

_SWEEP_FIELD = {
    "rdc-protocol": "rdc_protocol",
    "rdc-frequency": "rdc_frequency",
    "retransmissions": "retransmissions",
    "service-protocol": "service_protocol",
    "header-size": "header_size",
    "interference": "interference",
}


def sweep_parameter(
    sc: scn.Scenario,
    parameter: str,
    *,
    root_seed: int,
    horizon: float,
    replicas: int,
    device: str,
    jobs: int = 1,
):
    """Mean lifetime and duty cycles of ``device`` across one parameter's
    full variation range, everything else held at the scenario's values."""
    values = SWEEP_VALUES[parameter]
    field = _SWEEP_FIELD[parameter]
    lifetime_rows = []
    duty_rows = []
    for value in values:
        variant = sc.with_config(**{field: value})
        system = builder.system_from_scenario(variant)
        profiles = _device_profiles(variant)
        traces = engine.replicate(
            system, horizon, replicas, root_seed, record="summary", jobs=jobs
        )
        pool = [tr.summaries() for tr in traces]
        life = sum(lifetime(profiles[device], s[device]) for s in pool) / len(pool)
        lifetime_rows.append({"param_value": value, "lifetime_hours": f"{life:.6f}"})
        for mode in MODES:
            dt = sum(smc._timeshare(s[device], mode, smc.SCOPE_WHOLE) for s in pool) / len(pool)
            dt_work = sum(smc._timeshare(s[device], mode, smc.SCOPE_WORK) for s in pool) / len(pool)
            de = sum(
                duty_cycle_energy(s[device], profiles[device], mode) for s in pool
            ) / len(pool)
            duty_rows.append(
                {
                    "param_value": value,
                    "mode": str(mode),
                    "duty_time": f"{dt:.6f}",
                    "duty_time_working": f"{dt_work:.6f}",
                    "duty_energy": f"{de:.6f}",
                }
            )
    return lifetime_rows, duty_rows


def cmd_sweep(args) -> int:
    if args.parameter not in SWEEP_VALUES:
        print(
            f"unknown parameter {args.parameter!r}; one of {sorted(SWEEP_VALUES)}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    sc = scn.load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lifetime_rows, duty_rows = sweep_parameter(
        sc,
        args.parameter,
        root_seed=_seed(args),
        horizon=args.horizon,
        replicas=args.replicas,
        device=args.device,
        jobs=args.jobs,
    )
    _write_csv(out / f"sweep_{args.parameter}_lifetime.csv", lifetime_rows)
    _write_csv(out / f"sweep_{args.parameter}_duty.csv", duty_rows)
    values = [float(r["lifetime_hours"]) for r in lifetime_rows]
    print(
        f"sweep {args.parameter}: {len(values)} points, lifetime "
        f"{min(values):.1f}..{max(values):.1f} h (spread {max(values) - min(values):.1f} h)"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    sc = scn.load_scenario(args.scenario)
    profiles = _device_profiles(sc)
    type_of = {d.id: d.device_type for d in sc.topology.devices}
    from .energy import EnergyLedger, ModeInterval

    mode_by_name = {str(m): m for m in MODES}
    ledgers: dict[str, EnergyLedger] = {}
    horizon = 0.0
    with open(args.trace, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            device = row["device"]
            if device not in type_of:
                continue
            start, dur = float(row["time_s"]), float(row["duration_s"])
            horizon = max(horizon, start + dur)
            ledgers.setdefault(device, EnergyLedger(device, (0.0, 0.0))).intervals.append(
                ModeInterval(mode_by_name[row["mode"]], start, dur)
            )
    if not ledgers:
        print("trace holds no intervals for scenario devices", file=sys.stderr)
        return EXIT_USAGE
    for led in ledgers.values():
        led.window = (0.0, horizon)
    rows = _summary_rows(ledgers, profiles)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "energy_summary.csv", rows)
    columns = ["device", "total_energy_j", "lifetime_h"] + [f"dt_time_{m}" for m in MODES]
    print(",".join(columns))
    for row in rows:
        print(",".join(str(row[c]) for c in columns))
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iesim",
        description="Energy simulation and statistical model checking for IoT device networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, horizon_default=None):
        p.add_argument("--scenario", default=str(default_scenario_path()),
                       help="scenario XML (default: shipped BMS)")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed (fallback: IESIM_SEED, then 1)")
        if horizon_default is not None:
            p.add_argument("--horizon", type=parse_duration, default=parse_duration(horizon_default),
                           help=f"simulated time, <int><unit> (default {horizon_default})")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")

    p = sub.add_parser("validate-config", help="validate a scenario document")
    p.add_argument("--scenario", default=str(default_scenario_path()))
    p.set_defaults(func=cmd_validate_config)

    p = sub.add_parser("simulate", help="run one replica and export traces")
    common(p, "1w")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--powertrace-period", type=float, default=60.0,
                   help="powertrace reporting period in seconds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit duration distributions from a trace CSV")
    p.add_argument("--trace", required=True, help="trace.csv from simulate")
    p.add_argument("--scenario", default=str(default_scenario_path()))
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", help="check requirements by statistical model checking")
    common(p)
    p.add_argument("--requirements", default=str(default_requirements_path()))
    p.add_argument("--horizon", type=parse_duration, default=None,
                   help="override the requirement file's horizon")
    p.add_argument("--delta", type=float, default=None, help="estimation precision")
    p.add_argument("--alpha", type=float, default=None, help="confidence parameter")
    p.add_argument("--out", default=None, help="write verdicts.csv and device_summary.csv here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="vary one energy parameter over its range")
    common(p, "1w")
    p.add_argument("--parameter", required=True, help=f"one of {sorted(SWEEP_VALUES)}")
    p.add_argument("--replicas", type=int, default=16, help="replicas per point")
    p.add_argument("--device", default="floor1.server", help="device whose lifetime is reported")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="per-device energy summary from a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--scenario", default=str(default_scenario_path()))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; normalize other codes
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        return args.func(args)
    except (scn.ConfigError, smc.SmcError, fitting.FittingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except engine.DeadlockError as exc:
        print(f"deadlock: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
