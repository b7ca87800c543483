"""Component-based stochastic state machines and their composition.

Atomic components are transition systems over named locations with a small
numeric variable store. Guards, actions and duration rules are declarative
data (not callables) so a composed system can be lowered to the flat array
program both simulation cores execute.

Composition: interactions synchronize exported transitions of several
components and may copy variables between them; priorities filter among
simultaneously enabled interactions. Guards only ever read the owning
component's variables, which keeps enabledness locally computable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from . import clock
from .energy import DeviceProfile
from .modes import OperatingMode
from .rng import Rng
from .stochastics import DistributionRef, sample


class ModelError(ValueError):
    pass


class ConstructionError(ModelError):
    pass


class LogicError(RuntimeError):
    """An engine-level contract was violated (e.g. firing a disabled move)."""


# --------------------------------------------------------------------------
# Guards


@dataclass(frozen=True)
class GuardTrue:
    def holds(self, variables: Mapping[str, float]) -> bool:
        return True


@dataclass(frozen=True)
class GuardPositive:
    var: str

    def holds(self, variables: Mapping[str, float]) -> bool:
        return variables.get(self.var, 0.0) > 0.0


@dataclass(frozen=True)
class GuardZero:
    var: str

    def holds(self, variables: Mapping[str, float]) -> bool:
        return variables.get(self.var, 0.0) == 0.0


@dataclass(frozen=True)
class GuardAll:
    guards: tuple["Guard", ...]

    def holds(self, variables: Mapping[str, float]) -> bool:
        return all(g.holds(variables) for g in self.guards)


@dataclass(frozen=True)
class GuardNot:
    guard: "Guard"

    def holds(self, variables: Mapping[str, float]) -> bool:
        return not self.guard.holds(variables)


Guard = Union[GuardTrue, GuardPositive, GuardZero, GuardAll, GuardNot]

GUARD_FALSE = GuardNot(GuardTrue())


# --------------------------------------------------------------------------
# Actions (variable updates applied when a transition fires)


@dataclass(frozen=True)
class SetVar:
    var: str
    value: float

    def apply(self, variables: dict[str, float], env_m: float, rng: Rng) -> None:
        variables[self.var] = self.value


@dataclass(frozen=True)
class AddVar:
    var: str
    delta: float

    def apply(self, variables: dict[str, float], env_m: float, rng: Rng) -> None:
        variables[self.var] = variables.get(self.var, 0.0) + self.delta


@dataclass(frozen=True)
class AddVarVar:
    """var += other_var (used to fold synchronization payloads into state)."""

    var: str
    source: str

    def apply(self, variables: dict[str, float], env_m: float, rng: Rng) -> None:
        variables[self.var] = variables.get(self.var, 0.0) + variables.get(self.source, 0.0)


@dataclass(frozen=True)
class DrawBernoulli:
    """var = 1 with probability clamp(base + per_traffic * m, 0, 1), else 0.

    ``m`` is the replica-wide traffic level, so event probabilities may grow
    with offered load.
    """

    var: str
    base: float
    per_traffic: float = 0.0

    def apply(self, variables: dict[str, float], env_m: float, rng: Rng) -> None:
        p = min(1.0, max(0.0, self.base + self.per_traffic * env_m))
        variables[self.var] = 1.0 if rng.random() < p else 0.0


Action = Union[SetVar, AddVar, AddVarVar, DrawBernoulli]


# --------------------------------------------------------------------------
# Duration rules
#
# A transition's sampled duration is the dwell time in its *target*
# location: firing is instantaneous, the sample sets how long the component
# is then held there before its outgoing transitions become ready. A
# location's mode is charged for all wall-clock time between entering and
# leaving it, including any extra time spent waiting for a rendezvous
# partner beyond the sampled dwell.


@dataclass(frozen=True)
class DistDuration:
    dist: DistributionRef

    def draw(self, rng: Rng, now: float, env_m: float) -> float:
        return sample(self.dist, rng)

    def mean(self, env_m: float = 1.0, working: bool = True) -> float:
        return self.dist.mean()


@dataclass(frozen=True)
class TrafficScaledDuration:
    """Base draw stretched by channel activity: x * (1 + lin*m + quad*m^2)."""

    dist: DistributionRef
    lin: float = 0.0
    quad: float = 0.0

    def _factor(self, env_m: float) -> float:
        return 1.0 + self.lin * env_m + self.quad * env_m * env_m

    def draw(self, rng: Rng, now: float, env_m: float) -> float:
        return sample(self.dist, rng) * self._factor(env_m)

    def mean(self, env_m: float = 1.0, working: bool = True) -> float:
        return self.dist.mean() * self._factor(env_m)


@dataclass(frozen=True)
class ScheduleDuration:
    """Delay until the next run of a periodic job.

    The period depends on the simulated time of day (working hours vs the
    rest); when ``traffic_scaled`` the rate additionally grows with the
    replica traffic level m. The multiplicative jitter desynchronizes the
    fleet of schedules.
    """

    work_period: float
    off_period: float
    jitter_lo: float = 0.9
    jitter_hi: float = 1.1
    traffic_scaled: bool = True

    def __post_init__(self):
        if self.work_period <= 0 or self.off_period <= 0:
            raise ConstructionError("schedule periods must be positive")
        if not 0 < self.jitter_lo <= self.jitter_hi:
            raise ConstructionError("bad jitter bounds")

    def period_at(self, now: float, env_m: float) -> float:
        base = self.work_period if clock.is_working(now) else self.off_period
        return base / env_m if self.traffic_scaled else base

    def draw(self, rng: Rng, now: float, env_m: float) -> float:
        return self.period_at(now, env_m) * rng.uniform(self.jitter_lo, self.jitter_hi)

    def mean(self, env_m: float = 1.0, working: bool = True) -> float:
        base = self.work_period if working else self.off_period
        if self.traffic_scaled:
            base /= env_m
        return base * 0.5 * (self.jitter_lo + self.jitter_hi)


DurationRule = Union[DistDuration, TrafficScaledDuration, ScheduleDuration]


def as_duration(value: DurationRule | DistributionRef) -> DurationRule:
    if isinstance(value, DistributionRef):
        return DistDuration(value)
    return value


# --------------------------------------------------------------------------
# Components


@dataclass(frozen=True)
class Transition:
    label: str
    source: str
    target: str
    duration: DurationRule
    guard: Guard = GuardTrue()
    exported: bool = False
    actions: tuple[Action, ...] = ()
    peripherals: tuple[tuple[str, float], ...] = ()  # (event name, probability)


@dataclass(frozen=True)
class AtomicComponent:
    """A transition system enriched with data.

    ``location_modes`` attributes wall-clock residency in a location to an
    operating mode of ``device`` (components without a device, e.g. pure
    schedulers, are not billed).

    Two location classes relax the usual wait-for-dwell rendezvous rule:
    ``soft_locations`` (interruptible sleep) let any synchronization cut the
    residency short, while ``absorbing_locations`` (busy but listening) let
    only self-loop synchronizations fire mid-dwell, leaving the residency
    untouched. A self-loop fired on either class preserves the dwell.
    """

    id: str
    locations: frozenset[str]
    initial: str
    transitions: tuple[Transition, ...]
    variables: Mapping[str, float] = field(default_factory=dict)
    location_modes: Mapping[str, OperatingMode] = field(default_factory=dict)
    soft_locations: frozenset[str] = frozenset()
    absorbing_locations: frozenset[str] = frozenset()
    device: str | None = None

    def __post_init__(self):
        if self.initial not in self.locations:
            raise ConstructionError(f"{self.id}: initial location {self.initial!r} not declared")
        seen: dict[tuple[str, str], Transition] = {}
        exported_by_label: dict[str, bool] = {}
        for tr in self.transitions:
            if tr.source not in self.locations or tr.target not in self.locations:
                raise ConstructionError(
                    f"{self.id}: transition {tr.label!r} references undeclared location"
                )
            key = (tr.label, tr.source)
            if key in seen:
                raise ConstructionError(f"{self.id}: duplicate transition {key}")
            seen[key] = tr
            prev = exported_by_label.setdefault(tr.label, tr.exported)
            if prev != tr.exported:
                raise ConstructionError(
                    f"{self.id}: label {tr.label!r} is both exported and internal"
                )
        if self.soft_locations & self.absorbing_locations:
            raise ConstructionError(
                f"{self.id}: a location cannot be both soft and absorbing"
            )
        for loc in self.soft_locations | self.absorbing_locations | set(self.location_modes):
            if loc not in self.locations:
                raise ConstructionError(f"{self.id}: unknown location {loc!r} in metadata")

    def arcs_from(self, location: str) -> list[Transition]:
        return [t for t in self.transitions if t.source == location]

    def arc(self, label: str, source: str) -> Transition | None:
        for t in self.transitions:
            if t.label == label and t.source == source:
                return t
        return None

    def labels(self) -> set[str]:
        return {t.label for t in self.transitions}

    def exported_labels(self) -> set[str]:
        return {t.label for t in self.transitions if t.exported}


@dataclass(frozen=True)
class Transfer:
    """Directional variable copy applied when an interaction fires."""

    src_component: str
    src_var: str
    dst_component: str
    dst_var: str


@dataclass(frozen=True)
class Interaction:
    name: str
    participants: tuple[tuple[str, str], ...]  # (component id, exported label)
    transfers: tuple[Transfer, ...] = ()

    def __post_init__(self):
        if not self.participants:
            raise ConstructionError(f"interaction {self.name}: no participants")
        comps = [c for c, _ in self.participants]
        if len(set(comps)) != len(comps):
            raise ConstructionError(
                f"interaction {self.name}: a component participates more than once"
            )


@dataclass(frozen=True)
class SystemModel:
    """Composition of atomic components by interactions and priorities.

    ``regime`` is a discrete distribution of the per-replica traffic level m
    as (level, probability) atoms; the default pins m = 1.
    """

    components: tuple[AtomicComponent, ...]
    interactions: tuple[Interaction, ...] = ()
    priorities: tuple[tuple[str, str], ...] = ()  # (higher, lower) interaction names
    regime: tuple[tuple[float, float], ...] = ((1.0, 1.0),)

    def __post_init__(self):
        by_id = {}
        for comp in self.components:
            if comp.id in by_id:
                raise ConstructionError(f"duplicate component id {comp.id!r}")
            by_id[comp.id] = comp
        names = set()
        for inter in self.interactions:
            if inter.name in names:
                raise ConstructionError(f"duplicate interaction name {inter.name!r}")
            names.add(inter.name)
            for comp_id, label in inter.participants:
                comp = by_id.get(comp_id)
                if comp is None:
                    raise ConstructionError(
                        f"interaction {inter.name}: unknown component {comp_id!r}"
                    )
                if label not in comp.exported_labels():
                    raise ConstructionError(
                        f"interaction {inter.name}: {comp_id!r} exports no {label!r}"
                    )
            for tf in inter.transfers:
                for cid, var in ((tf.src_component, tf.src_var), (tf.dst_component, tf.dst_var)):
                    if cid not in by_id:
                        raise ConstructionError(
                            f"interaction {inter.name}: transfer references {cid!r}"
                        )
        for high, low in self.priorities:
            if high not in names or low not in names:
                raise ConstructionError(f"priority ({high}, {low}) references unknown interaction")
        self._check_priority_acyclic()
        total = math.fsum(p for _, p in self.regime)
        if not self.regime or abs(total - 1.0) > 1e-9 or any(
            lv <= 0 or p < 0 for lv, p in self.regime
        ):
            raise ConstructionError("regime atoms must be positive levels with probabilities summing to 1")

    def _check_priority_acyclic(self) -> None:
        adj: dict[str, list[str]] = {}
        for high, low in self.priorities:
            adj.setdefault(high, []).append(low)
        state: dict[str, int] = {}

        def visit(node: str) -> None:
            state[node] = 1
            for nxt in adj.get(node, ()):
                mark = state.get(nxt, 0)
                if mark == 1:
                    raise ConstructionError("priority relation contains a cycle")
                if mark == 0:
                    visit(nxt)
            state[node] = 2

        for name in adj:
            if state.get(name, 0) == 0:
                visit(name)

    def component(self, comp_id: str) -> AtomicComponent:
        for comp in self.components:
            if comp.id == comp_id:
                return comp
        raise KeyError(comp_id)

    def interaction(self, name: str) -> Interaction:
        for inter in self.interactions:
            if inter.name == name:
                return inter
        raise KeyError(name)

    def higher_of(self, name: str) -> list[str]:
        return [h for h, l in self.priorities if l == name]


# --------------------------------------------------------------------------
# Small-step semantics (configuration + one move at a time)


@dataclass
class SystemState:
    time: float
    locations: dict[str, str]
    variables: dict[str, dict[str, float]]
    env_m: float = 1.0


InternalMove = tuple[str, Transition]
Move = Union[Interaction, InternalMove]


def initial_state(system: SystemModel, env_m: float = 1.0) -> SystemState:
    return SystemState(
        time=0.0,
        locations={c.id: c.initial for c in system.components},
        variables={c.id: dict(c.variables) for c in system.components},
        env_m=env_m,
    )


def internal_moves(system: SystemModel, state: SystemState) -> list[InternalMove]:
    """Autonomously fireable (component, transition) pairs."""
    moves = []
    for comp in system.components:
        loc = state.locations[comp.id]
        for tr in comp.arcs_from(loc):
            if not tr.exported and tr.guard.holds(state.variables[comp.id]):
                moves.append((comp.id, tr))
    return moves


def _interaction_arcs(
    system: SystemModel, state: SystemState, interaction: Interaction
) -> list[tuple[str, Transition]] | None:
    """Participant arcs if the interaction is enabled in ``state``."""
    arcs = []
    for comp_id, label in interaction.participants:
        comp = system.component(comp_id)
        tr = comp.arc(label, state.locations[comp_id])
        if tr is None or not tr.guard.holds(state.variables[comp_id]):
            return None
        arcs.append((comp_id, tr))
    return arcs


def enabled_interactions(system: SystemModel, state: SystemState) -> list[Interaction]:
    """Guard-enabled interactions after priority filtering."""
    enabled = [
        inter for inter in system.interactions
        if _interaction_arcs(system, state, inter) is not None
    ]
    names = {i.name for i in enabled}
    return [
        inter for inter in enabled
        if not any(h in names for h in system.higher_of(inter.name))
    ]


def fire(system: SystemModel, state: SystemState, move: Move, rng: Rng) -> tuple[SystemState, float]:
    """Take one move atomically; returns the new state and the elapsed time.

    For interactions the elapsed time is the maximum of the participants'
    sampled durations (the rendezvous completes when the slowest does) and
    variable updates run after the data transfer.
    """
    new = SystemState(
        time=state.time,
        locations=dict(state.locations),
        variables={cid: dict(vs) for cid, vs in state.variables.items()},
        env_m=state.env_m,
    )

    if isinstance(move, Interaction):
        arcs = _interaction_arcs(system, state, move)
        if arcs is None:
            raise LogicError(f"interaction {move.name} is not enabled")
        elapsed = 0.0
        for comp_id, tr in arcs:
            elapsed = max(elapsed, tr.duration.draw(rng, state.time, state.env_m))
        for tf in move.transfers:
            new.variables[tf.dst_component][tf.dst_var] = new.variables[tf.src_component].get(
                tf.src_var, 0.0
            )
        for comp_id, tr in arcs:
            new.locations[comp_id] = tr.target
            for action in tr.actions:
                action.apply(new.variables[comp_id], new.env_m, rng)
    else:
        comp_id, tr = move
        if tr.exported:
            raise LogicError(f"{comp_id}.{tr.label} is exported and only fires via interactions")
        loc = state.locations[comp_id]
        if tr.source != loc or not tr.guard.holds(state.variables[comp_id]):
            raise LogicError(f"{comp_id}.{tr.label} is not enabled at {loc}")
        elapsed = tr.duration.draw(rng, state.time, state.env_m)
        new.locations[comp_id] = tr.target
        for action in tr.actions:
            action.apply(new.variables[comp_id], new.env_m, rng)

    new.time = state.time + elapsed
    return new, elapsed


# --------------------------------------------------------------------------
# The canonical energy automaton

OFF, LPM, CPU, TX, RX = "Off", "LPM", "CPU", "Tx", "Rx"

ENERGY_LOCATIONS = frozenset({OFF, LPM, CPU, TX, RX})

# (label, source, target, exported) of the canonical automaton
ENERGY_ARCS: tuple[tuple[str, str, str, bool], ...] = (
    ("activate", OFF, LPM, False),
    ("process", LPM, CPU, False),
    ("sndPacket", CPU, TX, True),
    ("sndPacket", RX, TX, True),
    ("recv", LPM, RX, True),
    ("recv", TX, RX, True),
    ("initDutyCycle", TX, LPM, False),
    ("initDutyCycle", RX, LPM, False),
    ("tick", LPM, LPM, True),
)

ENERGY_LABELS = ("activate", "process", "sndPacket", "recv", "initDutyCycle", "tick")

LOCATION_MODES: Mapping[str, OperatingMode] = {
    # Pre-activation idle is billed at the low-power draw: ledgers must tile
    # the whole window and an inactive radio draws its sleep current.
    OFF: OperatingMode.LPM,
    LPM: OperatingMode.LPM,
    CPU: OperatingMode.CPU,
    TX: OperatingMode.TX,
    RX: OperatingMode.RX,
}


def build_energy_automaton(
    profile: DeviceProfile,
    timing: Mapping[str, DurationRule | DistributionRef],
    *,
    guards: Mapping[tuple[str, str] | str, Guard] | None = None,
    actions: Mapping[tuple[str, str] | str, tuple[Action, ...]] | None = None,
    extra_arcs: Sequence[Transition] = (),
    variables: Mapping[str, float] | None = None,
    component_id: str | None = None,
) -> AtomicComponent:
    """The duty-cycling device automaton over {Off, LPM, CPU, Tx, Rx}.

    ``timing`` must provide a duration for every canonical transition label.
    Guards and actions may be given per label or per (label, source) pair;
    additional arcs (e.g. a periodic channel-check wakeup) extend the
    canonical shape without replacing it.
    """
    guards = guards or {}
    actions = actions or {}

    def lookup(table, label, source, default):
        if (label, source) in table:
            return table[(label, source)]
        return table.get(label, default)

    arcs: list[Transition] = []
    for label, source, target, exported in ENERGY_ARCS:
        if label not in timing:
            raise ConstructionError(f"no duration for {label}")
        arcs.append(
            Transition(
                label=label,
                source=source,
                target=target,
                duration=as_duration(timing[label]),
                guard=lookup(guards, label, source, GuardTrue()),
                exported=exported,
                actions=tuple(lookup(actions, label, source, ())),
            )
        )
    arcs.extend(extra_arcs)

    return AtomicComponent(
        id=component_id or profile.name,
        locations=ENERGY_LOCATIONS,
        initial=OFF,
        transitions=tuple(arcs),
        variables=dict(variables or {}),
        location_modes=LOCATION_MODES,
        soft_locations=frozenset({OFF, LPM}),
        device=component_id or profile.name,
    )
