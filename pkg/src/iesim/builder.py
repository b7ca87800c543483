"""Assembly of the building's composed system model.

One energy automaton per device, a report schedule per floor server, a
forwarding schedule per floor controller, an actuation-duty schedule per
server, and one send/receive interaction per topology link.
"""

from __future__ import annotations

from typing import Mapping

from . import model as m
from .effects import Calibration, ModeTimingModel, effect_model
from .energy import DeviceProfile
from .scenario import ConfigError, EnergyConfig, Scenario, Topology, Workload

# actuation duty fired per actuation cycle, gated per resource
ACTUATION_EVENTS = {
    "thermostat": ("actuate:thermostat", 1.0),
    "light-actuator": ("actuate:light", 0.5),
    "alarm": ("actuate:alarm", 0.02),
}


def device_automaton(
    device_id: str,
    profile: DeviceProfile,
    timing: ModeTimingModel,
    read_events: tuple[str, ...] = (),
) -> m.AtomicComponent:
    """The BMS wiring of the energy automaton.

    Pending application messages are queued by clock ticks; the device
    drains them at the next wake (process -> send -> response listen). A
    collided send retries while the retry budget lasts. The Rx->Tx chain
    lets a queued message go out straight after a reception.
    """
    send_actions: tuple[m.Action, ...] = (
        m.DrawBernoulli("collided", timing.p_collision, 0.0),
        m.SetVar("retries", float(timing.max_retries)),
    )
    guards = {
        ("process", "LPM"): m.GuardPositive("pending"),
        ("sndPacket", "Rx"): m.GuardPositive("pending"),
        ("initDutyCycle", "Tx"): m.GUARD_FALSE,  # Tx exits via the response listen
        # never duty-cycle away from a non-empty send queue: queued messages
        # go out back-to-back through the Rx -> Tx chain
        ("initDutyCycle", "Rx"): m.GuardZero("pending"),
    }
    if timing.protocol == "nullRDC":
        # no duty cycling: listening holds happen regardless of the queue
        # and the stack services sends from the listening state
        guards[("wakeup", "LPM")] = m.GuardTrue()
        guards[("process", "LPM")] = m.GUARD_FALSE
    actions = {
        ("process", "LPM"): (m.AddVar("pending", -1.0),),
        ("sndPacket", "CPU"): send_actions,
        ("sndPacket", "Rx"): (m.AddVar("pending", -1.0),) + send_actions,
        ("tick", "LPM"): (m.AddVarVar("pending", "tick_in"),),
    }
    extra = [
        m.Transition(
            label="wakeup",
            source="LPM",
            target="Rx",
            duration=timing["wakeup"],
            guard=guards.pop(("wakeup", "LPM"), m.GuardZero("pending")),
        ),
        m.Transition(
            label="respWait",
            source="Tx",
            target="Rx",
            duration=timing["respWait"],
            guard=m.GuardNot(
                m.GuardAll((m.GuardPositive("collided"), m.GuardPositive("retries")))
            ),
        ),
        m.Transition(
            label="retx",
            source="Tx",
            target="Tx",
            duration=timing["retx"],
            guard=m.GuardAll((m.GuardPositive("collided"), m.GuardPositive("retries"))),
            actions=(
                m.AddVar("retries", -1.0),
                m.DrawBernoulli("collided", timing.p_collision, 0.0),
            ),
        ),
    ]
    # a listening radio receives: packets arriving mid-check (or mid-hold)
    # are absorbed into the ongoing Rx stretch via a preemptible self-loop,
    # so senders never block on a receiver that is already listening
    extra.append(
        m.Transition(
            label="recv",
            source="Rx",
            target="Rx",
            duration=timing["recv"],
            exported=True,
        )
    )
    auto = m.build_energy_automaton(
        profile,
        timing.rules,
        guards=guards,
        actions=actions,
        extra_arcs=tuple(extra),
        variables={"pending": 0.0, "collided": 0.0, "retries": 0.0, "tick_in": 0.0},
        component_id=device_id,
    )
    auto = m.AtomicComponent(
        id=auto.id, locations=auto.locations, initial=auto.initial,
        transitions=auto.transitions, variables=auto.variables,
        location_modes=auto.location_modes,
        soft_locations=auto.soft_locations,
        absorbing_locations=frozenset({"Rx"}),
        device=auto.device,
    )
    if read_events:
        # sensor reads happen while the report is assembled
        patched = tuple(
            tr if not (tr.label == "process" and tr.source == "LPM")
            else m.Transition(
                tr.label, tr.source, tr.target, tr.duration, tr.guard,
                tr.exported, tr.actions,
                peripherals=tuple((ev, 1.0) for ev in read_events),
            )
            for tr in auto.transitions
        )
        auto = m.AtomicComponent(
            id=auto.id, locations=auto.locations, initial=auto.initial,
            transitions=patched, variables=auto.variables,
            location_modes=auto.location_modes, soft_locations=auto.soft_locations,
            device=auto.device,
        )
    return auto


def _schedule_component(
    comp_id: str,
    rule: m.ScheduleDuration,
    *,
    exported: bool,
    peripherals: tuple[tuple[str, float], ...] = (),
    device: str | None = None,
) -> m.AtomicComponent:
    return m.AtomicComponent(
        id=comp_id,
        locations=frozenset({"T"}),
        initial="T",
        transitions=(
            m.Transition(
                label="emit",
                source="T",
                target="T",
                duration=rule,
                exported=exported,
                peripherals=peripherals,
            ),
        ),
        variables={"outbox": 1.0} if exported else {},
        device=device,
    )


def build_system(
    topology: Topology,
    config: EnergyConfig,
    calib: Calibration | Mapping[str, float] | None,
    profiles: Mapping[str, DeviceProfile],
    workload: Workload = Workload(),
) -> m.SystemModel:
    """Compose the full building model from its parts."""
    if not topology.devices:
        raise ConfigError("empty topology")
    if not isinstance(calib, Calibration):
        calib = Calibration(dict(calib or {}))

    components: list[m.AtomicComponent] = []
    interactions: list[m.Interaction] = []

    for dev in topology.devices:
        profile = profiles.get(dev.device_type)
        if profile is None:
            raise ConfigError(
                f"device {dev.id}: no profile for type {dev.device_type!r}; "
                f"known: {sorted(profiles)}"
            )
        timing = effect_model(config, dev.device_type, calib)
        read_events = tuple(f"read:{r}" for r in dev.resources)
        for event in read_events:
            if event not in profile.peripheral_costs_j:
                raise ConfigError(
                    f"device {dev.id}: profile {profile.name} prices no {event!r}"
                )
        components.append(device_automaton(dev.id, profile, timing, read_events))

        schedule = m.ScheduleDuration(
            workload.report_period_work, workload.report_period_off,
        )
        if dev.role in ("server", "controller"):
            timer_id = f"{dev.id}.schedule"
            components.append(_schedule_component(timer_id, schedule, exported=True))
            interactions.append(
                m.Interaction(
                    f"sched:{dev.id}",
                    participants=((timer_id, "emit"), (dev.id, "tick")),
                    transfers=(m.Transfer(timer_id, "outbox", dev.id, "tick_in"),),
                )
            )
        if dev.role == "server":
            duty = tuple(
                ACTUATION_EVENTS[r] for r in dev.resources if r in ACTUATION_EVENTS
            )
            for event, _ in duty:
                if event not in profile.peripheral_costs_j:
                    raise ConfigError(
                        f"device {dev.id}: profile {profile.name} prices no {event!r}"
                    )
            if duty:
                components.append(
                    _schedule_component(
                        f"{dev.id}.actuation",
                        m.ScheduleDuration(
                            workload.actuation_period_work,
                            workload.actuation_period_off,
                            traffic_scaled=False,
                        ),
                        exported=False,
                        peripherals=duty,
                        device=dev.id,
                    )
                )

    known = {d.id for d in topology.devices}
    for link in topology.links:
        if link.src not in known or link.dst not in known:
            raise ConfigError(f"link {link.src}->{link.dst} references unknown device")
        interactions.append(
            m.Interaction(
                f"link:{link.src}->{link.dst}",
                participants=((link.src, "sndPacket"), (link.dst, "recv")),
            )
        )

    return m.SystemModel(
        components=tuple(components),
        interactions=tuple(interactions),
        regime=workload.regime,
    )


def system_from_scenario(scenario: Scenario) -> m.SystemModel:
    return build_system(
        scenario.topology,
        scenario.config,
        Calibration(dict(scenario.calibration)),
        scenario.profiles,
        scenario.workload,
    )
