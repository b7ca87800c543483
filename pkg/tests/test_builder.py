import pytest

from iesim import builder, engine, scenario as scn
from iesim.modes import OperatingMode as OM


def test_bms_system_shape(bms_system):
    energy_automata = [
        c for c in bms_system.components if c.locations == frozenset({"Off", "LPM", "CPU", "Tx", "Rx"})
    ]
    assert len(energy_automata) == 9
    links = [i for i in bms_system.interactions if i.name.startswith("link:")]
    assert len(links) == 8
    scheds = [i for i in bms_system.interactions if i.name.startswith("sched:")]
    assert len(scheds) == 8  # 4 servers + 4 controllers


def test_empty_topology_rejected(bms_scenario):
    with pytest.raises(scn.ConfigError, match="empty"):
        builder.build_system(
            scn.Topology((), ()), bms_scenario.config, None, bms_scenario.profiles
        )


def test_missing_profile_rejected(bms_scenario):
    topo = scn.build_bms_topology([scn.FloorSpec(1, "unknown-type")])
    with pytest.raises(scn.ConfigError, match="unknown-type"):
        builder.build_system(topo, bms_scenario.config, None, bms_scenario.profiles)


def test_missing_peripheral_cost_rejected(bms_scenario):
    from dataclasses import replace

    topo = scn.build_bms_topology(
        [scn.FloorSpec(1, "sky", resources=("temperature",))], bm_device_type="sky"
    )
    stripped = replace(bms_scenario.profiles["sky"], peripheral_costs_j={})
    with pytest.raises(scn.ConfigError, match="read:temperature"):
        builder.build_system(topo, bms_scenario.config, None, {"sky": stripped})


def test_dangling_link_rejected(bms_scenario):
    topo = scn.build_bms_topology([scn.FloorSpec(1, "sky")], bm_device_type="sky")
    broken = scn.Topology(topo.devices, topo.links + (scn.Link("floor1.server", "ghost"),))
    with pytest.raises(scn.ConfigError, match="ghost"):
        builder.build_system(broken, bms_scenario.config, None, bms_scenario.profiles)


def test_single_device_only_duty_cycles(bms_scenario):
    topo = scn.Topology(
        (scn.Device("lone", "sky", "building-manager"),), ()
    )
    system = builder.build_system(
        topo, bms_scenario.config, None, bms_scenario.profiles, bms_scenario.workload
    )
    trace = engine.run(system, 3600.0, seed=2)
    led = trace.ledgers["lone"]
    labels = {e[2] for e in trace.events}
    assert labels == {"activate", "wakeup", "initDutyCycle"}
    assert led.mode_seconds(OM.TX) == 0.0
    assert led.mode_seconds(OM.CPU) == 0.0
    assert led.mode_seconds(OM.RX) > 0.0


def test_regime_levels_affect_traffic(bms_scenario):
    from dataclasses import replace

    quiet = replace(bms_scenario, workload=replace(bms_scenario.workload, regime=((0.7, 1.0),)))
    busy = replace(bms_scenario, workload=replace(bms_scenario.workload, regime=((5.0, 1.0),)))
    t_quiet = engine.run(builder.system_from_scenario(quiet), 7200.0, seed=4, record="summary")
    t_busy = engine.run(builder.system_from_scenario(busy), 7200.0, seed=4, record="summary")
    reads = lambda tr: sum(
        tr.summaries()["floor1.server"].peripheral_counts.get("read:temperature", 0)
        for _ in (0,)
    )
    assert t_busy.env_m == 5.0 and t_quiet.env_m == 0.7
    assert reads(t_busy) > reads(t_quiet)


def test_collision_retransmissions_show_up_under_interference(bms_scenario):
    noisy = bms_scenario.with_config(interference=1.0, retransmissions=5)
    system = builder.system_from_scenario(noisy)
    trace = engine.run(system, 3 * 3600.0, seed=6)
    labels = [e[2] for e in trace.events]
    assert "retx" in labels


def test_interference_zero_has_few_retransmissions(bms_scenario):
    system = builder.system_from_scenario(bms_scenario.with_config(retransmissions=5))
    trace = engine.run(system, 3 * 3600.0, seed=6)
    labels = [e[2] for e in trace.events]
    sends = labels.count("sndPacket")
    assert labels.count("retx") <= max(3, 0.05 * sends)
