"""Flattening of a SystemModel into the array program the cores execute.

Both the pure-Python event loop and the compiled kernel interpret the same
lowered form, so they share one semantics definition and can be checked
against each other for bit-identical traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import model as m
from .modes import MODE_INDEX

# guard opcodes
G_TRUE, G_POS, G_ZERO, G_AND_POS, G_NAND_POS, G_FALSE, G_NONPOS = range(7)

# action opcodes
A_SET, A_ADD, A_ADDVAR, A_BERNOULLI = range(4)

# duration rule opcodes
D_DIST, D_SCALED, D_SCHEDULE = range(3)

# event kinds in the scheduler
EV_INTERNAL, EV_INTERACTION = 0, 1

# location classes
LOC_HARD, LOC_SOFT, LOC_ABSORB = 0, 1, 2


class LoweringError(ValueError):
    pass


@dataclass
class Program:
    """Flat, picklable description of a composed system."""

    # components
    n_comp: int = 0
    comp_ids: list[str] = field(default_factory=list)
    comp_initial: list[int] = field(default_factory=list)  # local location index
    comp_device: list[int] = field(default_factory=list)  # device index or -1
    loc_offset: list[int] = field(default_factory=list)  # component -> global loc base
    loc_count: list[int] = field(default_factory=list)
    var_offset: list[int] = field(default_factory=list)

    # global locations
    loc_names: list[str] = field(default_factory=list)
    loc_mode: list[int] = field(default_factory=list)  # mode index or -1
    loc_class: list[int] = field(default_factory=list)  # LOC_HARD/SOFT/ABSORB

    # variables
    n_vars: int = 0
    var_init: list[float] = field(default_factory=list)
    var_names: list[str] = field(default_factory=list)

    # transitions (flattened arcs)
    n_tr: int = 0
    tr_comp: list[int] = field(default_factory=list)
    tr_src: list[int] = field(default_factory=list)  # local location index
    tr_dst: list[int] = field(default_factory=list)
    tr_label: list[int] = field(default_factory=list)
    tr_exported: list[int] = field(default_factory=list)
    tr_guard_op: list[int] = field(default_factory=list)
    tr_guard_a: list[int] = field(default_factory=list)  # global var slot
    tr_guard_b: list[int] = field(default_factory=list)
    tr_dur_kind: list[int] = field(default_factory=list)
    tr_dur_dist: list[int] = field(default_factory=list)  # stochastics.KIND_CODE or -1
    tr_dur_p: list[list[float]] = field(default_factory=list)  # 5 params each
    tr_act_start: list[int] = field(default_factory=list)
    tr_act_count: list[int] = field(default_factory=list)
    tr_per_start: list[int] = field(default_factory=list)
    tr_per_count: list[int] = field(default_factory=list)

    # actions
    act_op: list[int] = field(default_factory=list)
    act_a: list[int] = field(default_factory=list)
    act_b: list[int] = field(default_factory=list)
    act_x: list[float] = field(default_factory=list)
    act_y: list[float] = field(default_factory=list)

    # peripheral emissions
    per_event: list[int] = field(default_factory=list)
    per_prob: list[float] = field(default_factory=list)

    # interactions
    n_inter: int = 0
    inter_names: list[str] = field(default_factory=list)
    inter_part_start: list[int] = field(default_factory=list)
    inter_part_count: list[int] = field(default_factory=list)
    ip_comp: list[int] = field(default_factory=list)
    # per participant: arc id by the component's local location (-1 = none)
    ip_arc_offset: list[int] = field(default_factory=list)
    ip_arc: list[int] = field(default_factory=list)
    inter_tf_start: list[int] = field(default_factory=list)
    inter_tf_count: list[int] = field(default_factory=list)
    tf_src_slot: list[int] = field(default_factory=list)
    tf_dst_slot: list[int] = field(default_factory=list)
    inter_higher_start: list[int] = field(default_factory=list)
    inter_higher_count: list[int] = field(default_factory=list)
    inter_higher: list[int] = field(default_factory=list)

    # component -> interactions to refresh when it changes
    comp_inter_start: list[int] = field(default_factory=list)
    comp_inter_count: list[int] = field(default_factory=list)
    comp_inter: list[int] = field(default_factory=list)

    # string tables
    label_names: list[str] = field(default_factory=list)
    device_names: list[str] = field(default_factory=list)
    event_names: list[str] = field(default_factory=list)

    # per-replica traffic regime (level, probability) atoms
    regime_levels: list[float] = field(default_factory=list)
    regime_probs: list[float] = field(default_factory=list)


def _intern(table: list[str], name: str) -> int:
    try:
        return table.index(name)
    except ValueError:
        table.append(name)
        return len(table) - 1


def _lower_guard(guard, slot_of) -> tuple[int, int, int]:
    if isinstance(guard, m.GuardTrue):
        return G_TRUE, 0, 0
    if isinstance(guard, m.GuardPositive):
        return G_POS, slot_of(guard.var), 0
    if isinstance(guard, m.GuardZero):
        return G_ZERO, slot_of(guard.var), 0
    if isinstance(guard, m.GuardAll):
        parts = guard.guards
        if len(parts) == 2 and all(isinstance(g, m.GuardPositive) for g in parts):
            return G_AND_POS, slot_of(parts[0].var), slot_of(parts[1].var)
        raise LoweringError(f"unsupported guard conjunction {guard}")
    if isinstance(guard, m.GuardNot):
        inner = guard.guard
        if isinstance(inner, m.GuardTrue):
            return G_FALSE, 0, 0
        if isinstance(inner, m.GuardPositive):
            return G_NONPOS, slot_of(inner.var), 0
        if isinstance(inner, m.GuardAll):
            op, a, b = _lower_guard(inner, slot_of)
            if op == G_AND_POS:
                return G_NAND_POS, a, b
        raise LoweringError(f"unsupported negated guard {guard}")
    raise LoweringError(f"unsupported guard {guard!r}")


def _lower_duration(rule) -> tuple[int, int, list[float]]:
    from .stochastics import KIND_CODE

    if isinstance(rule, m.DistDuration):
        d = rule.dist
        return D_DIST, KIND_CODE[d.kind], [d.a, d.b, d.quantum, 0.0, 0.0]
    if isinstance(rule, m.TrafficScaledDuration):
        d = rule.dist
        return D_SCALED, KIND_CODE[d.kind], [d.a, d.b, d.quantum, rule.lin, rule.quad]
    if isinstance(rule, m.ScheduleDuration):
        return D_SCHEDULE, -1, [
            rule.work_period,
            rule.off_period,
            rule.jitter_lo,
            rule.jitter_hi,
            1.0 if rule.traffic_scaled else 0.0,
        ]
    raise LoweringError(f"unsupported duration rule {rule!r}")


def lower(system: m.SystemModel) -> Program:
    p = Program()
    comp_index = {c.id: i for i, c in enumerate(system.components)}
    p.n_comp = len(system.components)

    # variable slots: declared variables plus any referenced by guards,
    # actions or transfers, all initialised to 0 unless declared
    slots: dict[tuple[int, str], int] = {}

    def slot_for(ci: int, var: str) -> int:
        key = (ci, var)
        if key not in slots:
            slots[key] = -1  # assigned after collection
        return slots[key]

    def collect_guard_vars(ci: int, guard) -> None:
        if isinstance(guard, (m.GuardPositive, m.GuardZero)):
            slot_for(ci, guard.var)
        elif isinstance(guard, m.GuardAll):
            for g in guard.guards:
                collect_guard_vars(ci, g)
        elif isinstance(guard, m.GuardNot):
            collect_guard_vars(ci, guard.guard)

    for ci, comp in enumerate(system.components):
        for var in comp.variables:
            slot_for(ci, var)
        for tr in comp.transitions:
            collect_guard_vars(ci, tr.guard)
            for act in tr.actions:
                slot_for(ci, act.var)
                if isinstance(act, m.AddVarVar):
                    slot_for(ci, act.source)
    for inter in system.interactions:
        for tf in inter.transfers:
            slot_for(comp_index[tf.src_component], tf.src_var)
            slot_for(comp_index[tf.dst_component], tf.dst_var)

    # assign slots grouped by component, names sorted for determinism
    for ci, comp in enumerate(system.components):
        p.var_offset.append(p.n_vars)
        names = sorted(var for (c, var) in slots if c == ci)
        for var in names:
            slots[(ci, var)] = p.n_vars
            p.var_names.append(f"{comp.id}:{var}")
            p.var_init.append(float(comp.variables.get(var, 0.0)))
            p.n_vars += 1

    # locations and components
    loc_local: dict[tuple[int, str], int] = {}
    local_names: list[list[str]] = []
    for ci, comp in enumerate(system.components):
        p.comp_ids.append(comp.id)
        p.loc_offset.append(len(p.loc_names))
        ordered = sorted(comp.locations)
        local_names.append(ordered)
        p.loc_count.append(len(ordered))
        for li, loc in enumerate(ordered):
            loc_local[(ci, loc)] = li
            p.loc_names.append(f"{comp.id}:{loc}")
            mode = comp.location_modes.get(loc)
            p.loc_mode.append(MODE_INDEX[mode] if mode is not None else -1)
            if loc in comp.soft_locations:
                p.loc_class.append(LOC_SOFT)
            elif loc in comp.absorbing_locations:
                p.loc_class.append(LOC_ABSORB)
            else:
                p.loc_class.append(LOC_HARD)
        p.comp_initial.append(loc_local[(ci, comp.initial)])
        p.comp_device.append(
            _intern(p.device_names, comp.device) if comp.device is not None else -1
        )

    # transitions
    arc_id: dict[tuple[int, str, str], int] = {}  # (comp, label, source) -> id
    for ci, comp in enumerate(system.components):
        for tr in comp.transitions:
            t = p.n_tr
            p.n_tr += 1
            arc_id[(ci, tr.label, tr.source)] = t
            p.tr_comp.append(ci)
            p.tr_src.append(loc_local[(ci, tr.source)])
            p.tr_dst.append(loc_local[(ci, tr.target)])
            p.tr_label.append(_intern(p.label_names, tr.label))
            p.tr_exported.append(1 if tr.exported else 0)
            op, a, b = _lower_guard(tr.guard, lambda v: slots[(ci, v)])
            p.tr_guard_op.append(op)
            p.tr_guard_a.append(a)
            p.tr_guard_b.append(b)
            kind, dist, params = _lower_duration(tr.duration)
            p.tr_dur_kind.append(kind)
            p.tr_dur_dist.append(dist)
            p.tr_dur_p.append(params)
            p.tr_act_start.append(len(p.act_op))
            p.tr_act_count.append(len(tr.actions))
            for act in tr.actions:
                if isinstance(act, m.SetVar):
                    p.act_op.append(A_SET)
                    p.act_a.append(slots[(ci, act.var)])
                    p.act_b.append(0)
                    p.act_x.append(act.value)
                    p.act_y.append(0.0)
                elif isinstance(act, m.AddVar):
                    p.act_op.append(A_ADD)
                    p.act_a.append(slots[(ci, act.var)])
                    p.act_b.append(0)
                    p.act_x.append(act.delta)
                    p.act_y.append(0.0)
                elif isinstance(act, m.AddVarVar):
                    p.act_op.append(A_ADDVAR)
                    p.act_a.append(slots[(ci, act.var)])
                    p.act_b.append(slots[(ci, act.source)])
                    p.act_x.append(0.0)
                    p.act_y.append(0.0)
                elif isinstance(act, m.DrawBernoulli):
                    p.act_op.append(A_BERNOULLI)
                    p.act_a.append(slots[(ci, act.var)])
                    p.act_b.append(0)
                    p.act_x.append(act.base)
                    p.act_y.append(act.per_traffic)
                else:
                    raise LoweringError(f"unsupported action {act!r}")
            p.tr_per_start.append(len(p.per_event))
            p.tr_per_count.append(len(tr.peripherals))
            for event, prob in tr.peripherals:
                p.per_event.append(_intern(p.event_names, event))
                p.per_prob.append(prob)

    # interactions
    p.n_inter = len(system.interactions)
    inter_index = {inter.name: i for i, inter in enumerate(system.interactions)}
    comp_inter_sets: list[set[int]] = [set() for _ in range(p.n_comp)]
    for ii, inter in enumerate(system.interactions):
        if len(inter.participants) > 16:
            raise LoweringError(
                f"interaction {inter.name}: more than 16 participants"
            )
        p.inter_names.append(inter.name)
        p.inter_part_start.append(len(p.ip_comp))
        p.inter_part_count.append(len(inter.participants))
        for comp_id, label in inter.participants:
            ci = comp_index[comp_id]
            comp_inter_sets[ci].add(ii)
            p.ip_comp.append(ci)
            p.ip_arc_offset.append(len(p.ip_arc))
            for loc_name in local_names[ci]:
                p.ip_arc.append(arc_id.get((ci, label, loc_name), -1))
        p.inter_tf_start.append(len(p.tf_src_slot))
        p.inter_tf_count.append(len(inter.transfers))
        for tf in inter.transfers:
            p.tf_src_slot.append(slots[(comp_index[tf.src_component], tf.src_var)])
            p.tf_dst_slot.append(slots[(comp_index[tf.dst_component], tf.dst_var)])

    for ii, inter in enumerate(system.interactions):
        highers = [inter_index[h] for h in system.higher_of(inter.name)]
        p.inter_higher_start.append(len(p.inter_higher))
        p.inter_higher_count.append(len(highers))
        p.inter_higher.extend(highers)

    # when a component changes we must refresh its interactions and anything
    # declared lower than them (the filter may have just been lifted)
    lowers_of: dict[int, list[int]] = {}
    for high, low in system.priorities:
        lowers_of.setdefault(inter_index[high], []).append(inter_index[low])
    for ci in range(p.n_comp):
        closure = set(comp_inter_sets[ci])
        frontier = list(closure)
        while frontier:
            nxt = []
            for ii in frontier:
                for lo in lowers_of.get(ii, ()):
                    if lo not in closure:
                        closure.add(lo)
                        nxt.append(lo)
            frontier = nxt
        p.comp_inter_start.append(len(p.comp_inter))
        p.comp_inter_count.append(len(closure))
        p.comp_inter.extend(sorted(closure))

    for level, prob in system.regime:
        p.regime_levels.append(level)
        p.regime_probs.append(prob)

    return p
