import pytest

from iesim import engine, model as m
from iesim import stochastics as st_
from iesim.modes import OperatingMode as OM


def single_mode_system(mode_loc="L"):
    comp = m.AtomicComponent(
        id="dev",
        locations=frozenset({mode_loc}),
        initial=mode_loc,
        transitions=(),
        location_modes={mode_loc: OM.LPM},
        device="dev",
    )
    return m.SystemModel(components=(comp,))


def test_powertrace_pure_lpm_counts():
    trace = engine.run(single_mode_system(), horizon=10.0, seed=1)
    log = engine.powertrace_log(trace, engine.PowertraceConfig(period=1.0, rtimer_hz=32768))
    assert len(log) == 10
    t, dev, cpu, lpm, tx, rx = log[-1]
    assert (t, dev) == (10.0, "dev")
    assert lpm == 327680
    assert cpu == tx == rx == 0
    # cumulative counts are monotone
    lpms = [row[3] for row in log]
    assert lpms == sorted(lpms)


def test_powertrace_empty_window():
    trace = engine.run(single_mode_system(), horizon=0.5, seed=1)
    assert engine.powertrace_log(trace, engine.PowertraceConfig(period=1.0)) == []


def test_powertrace_deltas_bounded_by_period(bms_system):
    trace = engine.run(bms_system, horizon=600.0, seed=3)
    cfg = engine.PowertraceConfig(period=5.0, rtimer_hz=32768)
    log = engine.powertrace_log(trace, cfg)
    by_dev = {}
    for t, dev, cpu, lpm, tx, rx in log:
        prev = by_dev.get(dev, (0, 0, 0, 0))
        now = (cpu, lpm, tx, rx)
        delta = sum(n - p for n, p in zip(now, prev))
        # flooring each of the four cumulative columns can add one tick apiece
        assert delta <= cfg.period * cfg.rtimer_hz + 4
        for n, p in zip(now, prev):
            assert n >= p
        by_dev[dev] = now


def test_powertrace_config_validation():
    with pytest.raises(ValueError):
        engine.PowertraceConfig(period=0.0)
    with pytest.raises(ValueError):
        engine.PowertraceConfig(rtimer_hz=0)


def test_trace_csv_format(tmp_path):
    sys_ = single_mode_system()
    trace = engine.run(sys_, horizon=2.0, seed=1)
    path = tmp_path / "trace.csv"
    engine.write_trace_csv(trace, path)
    lines = path.read_text().split("\n")
    assert lines[0] == "time_s,device,mode,duration_s"
    assert lines[1] == "0.000000,dev,LPM,2.000000"


def test_powertrace_csv_format(tmp_path, bms_system):
    trace = engine.run(bms_system, horizon=30.0, seed=2)
    path = tmp_path / "pt.csv"
    engine.write_powertrace_csv(trace, path, engine.PowertraceConfig(period=10.0))
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "time_s,device,cpu,lpm,tx,rx"
    assert len(lines) == 1 + 3 * 9  # 3 samples x 9 devices
    first = lines[1].split(",")
    assert first[0] == "10.000000"
    assert all(v.isdigit() for v in first[2:])
