import math

import pytest

from iesim import builder, effects, engine, fitting, model as m, scenario as scn
from iesim import stochastics as st_
from iesim.energy import total_energy
from iesim.modes import MODES, OperatingMode as OM
from iesim.rng import Rng, child_seed


def quiescent_device(simple_profile):
    tm = effects.effect_model(scn.EnergyConfig(), simple_profile.name)
    return builder.device_automaton("dev", simple_profile, tm)


def test_quiescent_run_is_mostly_lpm(simple_profile):
    system = m.SystemModel(components=(quiescent_device(simple_profile),))
    trace = engine.run(system, horizon=3600.0, seed=11)
    led = trace.ledgers["dev"]
    led.validate()
    assert led.mode_seconds(OM.LPM) / 3600.0 > 0.99
    labels = {e[2] for e in trace.events}
    assert "activate" in labels and "wakeup" in labels


def test_zero_horizon_rejected(bms_system):
    with pytest.raises(ValueError, match="horizon"):
        engine.run(bms_system, horizon=0.0, seed=1)


def test_same_seed_same_trace(bms_system):
    t1 = engine.run(bms_system, horizon=1800.0, seed=5)
    t2 = engine.run(bms_system, horizon=1800.0, seed=5)
    assert t1.interval_rows() == t2.interval_rows()
    assert t1.events == t2.events


def test_intervals_tile_horizon_and_modes_exclusive(bms_system):
    trace = engine.run(bms_system, horizon=7200.0, seed=9)
    for device, led in trace.ledgers.items():
        led.validate()
        assert math.fsum(iv.duration for iv in led.intervals) == pytest.approx(7200.0)
        # validate() already rejects overlap; also check ordering explicitly
        ends = [iv.start for iv in led.intervals]
        assert ends == sorted(ends)


def test_timestamps_monotone_and_bounded(bms_system):
    trace = engine.run(bms_system, horizon=3600.0, seed=10)
    times = [t for t, _, _ in trace.events]
    assert times == sorted(times)
    assert all(0.0 <= t < 3600.0 for t in times)
    for led in trace.ledgers.values():
        for iv in led.intervals:
            assert iv.end <= 3600.0 + 1e-9


def test_energy_additive_over_window_partition(bms_system, bms_scenario):
    trace = engine.run(bms_system, horizon=4 * 3600.0, seed=3)
    led = trace.ledgers["floor1.server"]
    profile = bms_scenario.profile_of("floor1.server")

    def clipped(led, a, b):
        from iesim.energy import EnergyLedger, ModeInterval

        part = EnergyLedger(led.device, (a, b))
        for iv in led.intervals:
            lo, hi = max(iv.start, a), min(iv.end, b)
            if hi > lo:
                part.intervals.append(ModeInterval(iv.mode, lo, hi - lo))
        part.peripheral_events = [(t, e) for t, e in led.peripheral_events if a <= t < b]
        return part

    cuts = [0.0, 1234.5, 5000.0, 9999.25, 4 * 3600.0]
    parts = [clipped(led, a, b) for a, b in zip(cuts, cuts[1:])]
    assert math.fsum(total_energy(p, profile) for p in parts) == pytest.approx(
        total_energy(led, profile), rel=1e-9
    )


def test_composition_soundness_single_component(simple_profile):
    """A one-component system's engine trace equals the standalone
    small-step firing sequence."""
    cycle = m.AtomicComponent(
        id="solo",
        locations=frozenset({"A", "B", "C"}),
        initial="A",
        transitions=(
            m.Transition("ab", "A", "B", m.DistDuration(st_.dirac(1.0))),
            m.Transition("bc", "B", "C", m.DistDuration(st_.dirac(2.0))),
            m.Transition("ca", "C", "A", m.DistDuration(st_.dirac(3.0))),
        ),
        location_modes={"A": OM.LPM, "B": OM.CPU, "C": OM.RX},
        device="solo",
    )
    system = m.SystemModel(components=(cycle,))
    horizon = 20.0
    trace = engine.run(system, horizon=horizon, seed=4)
    engine_labels = [label for _, _, label in trace.events]

    state = m.initial_state(system)
    rng = Rng(1)
    manual = []
    while state.time < horizon:
        moves = m.internal_moves(system, state)
        assert len(moves) == 1
        state, elapsed = m.fire(system, state, moves[0], rng)
        if state.time >= horizon + 1e-12:
            # the engine bills the final partial dwell without firing the
            # next transition, so the last manual move overshoots
            break
        manual.append(moves[0][1].label)

    # the engine fires ab at t=0 (dwell is in the target), so the engine's
    # label sequence leads the manual one by exactly the same labels
    assert engine_labels[: len(manual)] == manual or engine_labels == manual[: len(engine_labels)]
    led = trace.ledgers["solo"]
    assert math.fsum(iv.duration for iv in led.intervals) == pytest.approx(horizon)
    # dwell pattern: 1s in B, 2s in C, 3s in A, repeating
    assert [round(iv.duration, 6) for iv in led.intervals[:4]] == [1.0, 2.0, 3.0, 1.0]


def test_deadlock_reported_for_zero_duration_livelock():
    spin = m.AtomicComponent(
        id="spin",
        locations=frozenset({"s"}),
        initial="s",
        transitions=(m.Transition("loop", "s", "s", m.DistDuration(st_.dirac(0.0))),),
    )
    system = m.SystemModel(components=(spin,))
    with pytest.raises(engine.DeadlockError) as exc:
        engine.run(system, horizon=10.0, seed=1)
    snap = exc.value.snapshot
    assert snap["components"]["spin"]["location"] == "s"


def test_replicate_first_replica_matches_run(bms_system):
    traces = engine.replicate(bms_system, 1800.0, 1, root_seed=50)
    direct = engine.run(bms_system, 1800.0, child_seed(50, 0), record="summary")
    assert traces[0].summaries() == direct.summaries()


def test_replicate_deterministic_multiset(bms_system):
    a = engine.replicate(bms_system, 900.0, 10, root_seed=8)
    b = engine.replicate(bms_system, 900.0, 10, root_seed=8)
    key = lambda tr: sorted(
        (d, str(mo), round(v, 9))
        for d, s in tr.summaries().items()
        for mo, v in s.mode_seconds_total.items()
    )
    assert sorted(map(key, a)) == sorted(map(key, b))


def test_replicate_parallel_equals_sequential(bms_system, bms_scenario):
    from iesim.energy import lifetime

    seq = engine.replicate(bms_system, 1800.0, 8, root_seed=21, jobs=1)
    par = engine.replicate(bms_system, 1800.0, 8, root_seed=21, jobs=2)
    profile = bms_scenario.profile_of("floor1.server")
    mean = lambda traces: math.fsum(
        lifetime(profile, tr.summaries()["floor1.server"]) for tr in traces
    ) / len(traces)
    assert mean(par) == mean(seq)


def test_replicate_first_index_offsets_are_stable(bms_system):
    whole = engine.replicate(bms_system, 900.0, 6, root_seed=33)
    tail = engine.replicate(bms_system, 900.0, 3, root_seed=33, first_index=3)
    for a, b in zip(whole[3:], tail):
        assert a.summaries() == b.summaries()


def test_summary_matches_full_aggregation(bms_system):
    full = engine.run(bms_system, 5400.0, seed=14, record="full")
    summ = engine.run(bms_system, 5400.0, seed=14, record="summary")
    a, b = full.summaries(), summ.summaries()
    for device in a:
        for mode in MODES:
            assert a[device].mode_seconds_total[mode] == pytest.approx(
                b[device].mode_seconds_total[mode], abs=1e-9
            )
            assert a[device].mode_seconds_work[mode] == pytest.approx(
                b[device].mode_seconds_work[mode], abs=1e-9
            )
        assert a[device].peripheral_counts == b[device].peripheral_counts


def test_trace_fit_retrace_stability(simple_profile):
    """Fitting mode dwell distributions from a long trace and re-simulating
    with them reproduces the per-mode time shares."""
    sc_cfg = scn.EnergyConfig()
    tm = effects.effect_model(sc_cfg, simple_profile.name)
    dev = builder.device_automaton("dev", simple_profile, tm)
    sink = builder.device_automaton("sink", simple_profile, tm)
    timer = m.AtomicComponent(
        id="dev.schedule",
        locations=frozenset({"T"}),
        initial="T",
        transitions=(
            m.Transition(
                "emit", "T", "T",
                m.ScheduleDuration(20.0, 20.0, traffic_scaled=False),
                exported=True,
            ),
        ),
        variables={"outbox": 1.0},
    )
    system = m.SystemModel(
        components=(dev, sink, timer),
        interactions=(
            m.Interaction(
                "sched", (("dev.schedule", "emit"), ("dev", "tick")),
                transfers=(m.Transfer("dev.schedule", "outbox", "dev", "tick_in"),),
            ),
            m.Interaction("link", (("dev", "sndPacket"), ("sink", "recv"))),
        ),
    )
    horizon = 2 * 86400.0
    trace = engine.run(system, horizon, seed=77)
    led = trace.ledgers["dev"]
    shares = {mode: led.mode_seconds(mode) / horizon for mode in MODES}

    by_mode = {mode: [iv.duration for iv in led.intervals if iv.mode is mode] for mode in MODES}
    fitted = {}
    for mode in (OM.LPM, OM.RX):
        fitted[mode] = fitting.fit_normal(by_mode[mode]).distribution
    for mode in (OM.CPU, OM.TX):
        counts = [round(d / 0.001) for d in by_mode[mode]]
        lam = fitting.fit_poisson(counts).distribution.a
        fitted[mode] = st_.poisson(lam, quantum=0.001)

    refit_rules = dict(tm.rules)
    refit_rules["initDutyCycle"] = m.DistDuration(fitted[OM.LPM])
    refit_rules["wakeup"] = m.DistDuration(fitted[OM.RX])
    refit_rules["recv"] = m.DistDuration(fitted[OM.RX])
    refit_rules["respWait"] = m.DistDuration(fitted[OM.RX])
    refit_rules["process"] = m.DistDuration(fitted[OM.CPU])
    refit_rules["sndPacket"] = m.DistDuration(fitted[OM.TX])
    refit_rules["retx"] = m.DistDuration(fitted[OM.TX])
    tm2 = effects.ModeTimingModel(
        device_type=tm.device_type, protocol=tm.protocol, rules=refit_rules,
        wakes_per_second=tm.wakes_per_second, p_collision=tm.p_collision,
        max_retries=tm.max_retries,
    )
    # fits are keyed per device type: only the measured device is refit,
    # the sink keeps its own timing model
    dev2 = builder.device_automaton("dev", simple_profile, tm2)
    sink2 = builder.device_automaton("sink", simple_profile, tm)
    system2 = m.SystemModel(
        components=(dev2, sink2, timer),
        interactions=system.interactions,
    )
    trace2 = engine.run(system2, horizon, seed=99)
    led2 = trace2.ledgers["dev"]
    for mode in MODES:
        share2 = led2.mode_seconds(mode) / horizon
        assert share2 == pytest.approx(shares[mode], rel=0.10), mode
