"""The compiled kernel and the pure-Python core must agree bit for bit."""

import pytest

from iesim import builder, engine, lowering

pytestmark = pytest.mark.skipif(
    not engine.kernel_available(), reason="compiled kernel not built"
)


@pytest.fixture(scope="module")
def program(bms_system):
    return lowering.lower(bms_system)


def columns(raw):
    return {
        name: [float(x) for x in getattr(raw, name)]
        for name in (
            "interval_dev", "interval_mode", "interval_start", "interval_dur",
            "event_time", "event_comp", "event_label",
            "per_time", "per_dev", "per_event",
        )
    }


@pytest.mark.parametrize("seed", [1, 12345, 2**63 + 17])
def test_full_traces_bit_identical(program, seed):
    py = engine.make_core(program, "python").run(seed, 4 * 3600.0, "full")
    ck = engine.make_core(program, "kernel").run(seed, 4 * 3600.0, "full")
    assert py.env_m == ck.env_m
    a, b = columns(py), columns(ck)
    for name in a:
        assert a[name] == b[name], name


def test_summaries_bit_identical(program):
    py = engine.make_core(program, "python").run(99, 6 * 3600.0, "summary")
    ck = engine.make_core(program, "kernel").run(99, 6 * 3600.0, "summary")
    assert [float(x) for x in py.mode_total] == [float(x) for x in ck.mode_total]
    assert [float(x) for x in py.mode_work] == [float(x) for x in ck.mode_work]
    assert [int(x) for x in py.per_counts] == [int(x) for x in ck.per_counts]


def test_interference_config_bit_identical(bms_scenario):
    system = builder.system_from_scenario(bms_scenario.with_config(interference=0.7))
    program = lowering.lower(system)
    py = engine.make_core(program, "python").run(5, 2 * 3600.0, "full")
    ck = engine.make_core(program, "kernel").run(5, 2 * 3600.0, "full")
    assert columns(py) == columns(ck)


def test_deadlock_raised_identically():
    from iesim import model as m
    from iesim import stochastics as st_

    spin = m.AtomicComponent(
        id="spin", locations=frozenset({"s"}), initial="s",
        transitions=(m.Transition("loop", "s", "s", m.DistDuration(st_.dirac(0.0))),),
    )
    program = lowering.lower(m.SystemModel(components=(spin,)))
    for core_name in ("python", "kernel"):
        with pytest.raises(engine.DeadlockError):
            engine.make_core(program, core_name).run(1, 5.0, "summary")
