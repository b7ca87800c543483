"""Pure-Python event loop over a lowered Program.

This is the reference implementation of the simulation semantics. The
compiled kernel (iesim._kernel) executes the same algorithm over the same
lowered form with the same random streams; for any (program, seed, horizon)
the two produce bit-identical results.

Semantics in brief:

* A fired transition dwells in its target location for a sampled duration;
  the component's current location is billed wall-clock time from entry to
  exit, so waiting for a rendezvous partner extends the bill.
* Internal transitions fire as soon as the dwell expires (earliest first);
  exported transitions fire only through interactions.
* An interaction becomes ready when every hard-busy participant has passed
  its dwell; participants resting in a soft location (sleep) can be
  preempted immediately. All participants adopt the slowest participant's
  sampled duration (rendezvous).
* A self-loop fired by an interaction on a soft location leaves the
  residency untouched: clock-style couplings must not perturb sleep.
* Candidates due at the same instant are deduplicated, ordered canonically,
  and one is chosen uniformly at random; priorities remove an interaction
  whenever a declared-higher one is state-enabled.
"""

from __future__ import annotations

import math
from heapq import heappop, heappush

from .clock import DAY_S, WORK_END_S, WORK_START_S, work_seconds_before
from .lowering import (
    A_ADD,
    A_ADDVAR,
    A_BERNOULLI,
    A_SET,
    D_SCALED,
    D_SCHEDULE,
    EV_INTERACTION,
    EV_INTERNAL,
    G_AND_POS,
    G_FALSE,
    G_NAND_POS,
    G_NONPOS,
    G_POS,
    G_TRUE,
    G_ZERO,
    LOC_ABSORB,
    LOC_HARD,
    Program,
)
from .rng import Rng, child_seed
from .stochastics import DIRAC, EXPONENTIAL, KIND_CODE, NORMAL, POISSON, UNIFORM

LIVELOCK_LIMIT = 100_000

_DIRAC = KIND_CODE[DIRAC]
_UNIFORM = KIND_CODE[UNIFORM]
_NORMAL = KIND_CODE[NORMAL]
_POISSON = KIND_CODE[POISSON]
_EXPONENTIAL = KIND_CODE[EXPONENTIAL]


class DeadlockError(RuntimeError):
    """No time-advancing transition exists before the horizon."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


class RawRun:
    """Result columns shared by both cores."""

    __slots__ = (
        "env_m",
        "interval_dev",
        "interval_mode",
        "interval_start",
        "interval_dur",
        "event_time",
        "event_comp",
        "event_label",
        "per_time",
        "per_dev",
        "per_event",
        "mode_total",
        "mode_work",
        "per_counts",
    )

    def __init__(self, n_dev: int, n_event: int):
        self.env_m = 1.0
        self.interval_dev: list[int] = []
        self.interval_mode: list[int] = []
        self.interval_start: list[float] = []
        self.interval_dur: list[float] = []
        self.event_time: list[float] = []
        self.event_comp: list[int] = []
        self.event_label: list[int] = []
        self.per_time: list[float] = []
        self.per_dev: list[int] = []
        self.per_event: list[int] = []
        self.mode_total = [0.0] * (n_dev * 4)
        self.mode_work = [0.0] * (n_dev * 4)
        self.per_counts = [0] * (n_dev * n_event)


def _sample(rng: Rng, dist: int, a: float, b: float, quantum: float) -> float:
    if dist == _DIRAC:
        return a
    if dist == _UNIFORM:
        return a + (b - a) * rng.random()
    if dist == _NORMAL:
        x = rng.normal(a, b)
        return x if x > 0.0 else 0.0
    if dist == _POISSON:
        return rng.poisson(a) * quantum
    return -math.log(1.0 - rng.random()) / a


class PurePythonCore:
    """Interprets a lowered Program; one instance is reusable across runs."""

    name = "python"

    def __init__(self, program: Program):
        self.p = program
        p = program
        # internal arcs by (comp, local location)
        self.internal_at: list[list[int]] = [
            [] for _ in range(sum(p.loc_count))
        ]
        for t in range(p.n_tr):
            if not p.tr_exported[t]:
                c = p.tr_comp[t]
                self.internal_at[p.loc_offset[c] + p.tr_src[t]].append(t)

    # -- one replica ------------------------------------------------------

    def run(self, seed: int, horizon: float, record: str = "full") -> RawRun:
        p = self.p
        full = record == "full"
        n = p.n_comp
        out = RawRun(len(p.device_names), len(p.event_names))

        loc = list(p.comp_initial)
        busy = [0.0] * n
        entered = [0.0] * n
        variables = list(p.var_init)

        grng = Rng(seed)
        u = grng.random()
        env_m = p.regime_levels[-1]
        acc = 0.0
        for lv, pr in zip(p.regime_levels, p.regime_probs):
            acc += pr
            if u < acc:
                env_m = lv
                break
        out.env_m = env_m
        crng = [Rng(child_seed(seed, ci + 1)) for ci in range(n)]

        heap: list[tuple[float, int, int]] = []
        sched_tr = [math.nan] * p.n_tr
        sched_inter = [math.nan] * p.n_inter

        # -- helpers bound to local state ----------------------------------

        def guard_ok(t: int) -> bool:
            op = p.tr_guard_op[t]
            if op == G_TRUE:
                return True
            a = variables[p.tr_guard_a[t]]
            if op == G_POS:
                return a > 0.0
            if op == G_ZERO:
                return a == 0.0
            if op == G_NONPOS:
                return a <= 0.0
            if op == G_FALSE:
                return False
            b = variables[p.tr_guard_b[t]]
            if op == G_AND_POS:
                return a > 0.0 and b > 0.0
            if op == G_NAND_POS:
                return not (a > 0.0 and b > 0.0)
            raise AssertionError(op)

        def draw_duration(t: int, rng: Rng, now: float) -> float:
            kind = p.tr_dur_kind[t]
            q = p.tr_dur_p[t]
            if kind == D_SCHEDULE:
                tod = math.fmod(now, DAY_S)
                base = q[0] if WORK_START_S <= tod < WORK_END_S else q[1]
                if q[4] != 0.0:
                    base /= env_m
                return base * (q[2] + (q[3] - q[2]) * rng.random())
            x = _sample(rng, p.tr_dur_dist[t], q[0], q[1], q[2])
            if kind == D_SCALED:
                x *= 1.0 + q[3] * env_m + q[4] * env_m * env_m
            return x

        def schedule_internals(c: int, now: float) -> None:
            for t in self.internal_at[p.loc_offset[c] + loc[c]]:
                if guard_ok(t):
                    ft = busy[c] if busy[c] > now else now
                    if sched_tr[t] != ft:
                        sched_tr[t] = ft
                        heappush(heap, (ft, EV_INTERNAL, t))
                else:
                    sched_tr[t] = math.nan

        def resolve_arcs(i: int) -> list[int] | None:
            start = p.inter_part_start[i]
            arcs = []
            for k in range(start, start + p.inter_part_count[i]):
                c = p.ip_comp[k]
                a = p.ip_arc[p.ip_arc_offset[k] + loc[c]]
                if a < 0 or not guard_ok(a):
                    return None
                arcs.append(a)
            return arcs

        def state_enabled(i: int) -> bool:
            return resolve_arcs(i) is not None

        def blocked(i: int) -> bool:
            start = p.inter_higher_start[i]
            for k in range(start, start + p.inter_higher_count[i]):
                if state_enabled(p.inter_higher[k]):
                    return True
            return False

        def interaction_ready(i: int, now: float) -> float | None:
            start = p.inter_part_start[i]
            ready = now
            for k in range(start, start + p.inter_part_count[i]):
                c = p.ip_comp[k]
                a = p.ip_arc[p.ip_arc_offset[k] + loc[c]]
                if a < 0 or not guard_ok(a):
                    return None
                cls = p.loc_class[p.loc_offset[c] + loc[c]]
                waits = cls == LOC_HARD or (
                    cls == LOC_ABSORB and p.tr_src[a] != p.tr_dst[a]
                )
                if waits and busy[c] > ready:
                    ready = busy[c]
            return ready

        def schedule_interaction(i: int, now: float) -> None:
            ready = interaction_ready(i, now)
            if ready is None or blocked(i):
                sched_inter[i] = math.nan
                return
            if sched_inter[i] != ready:
                sched_inter[i] = ready
                heappush(heap, (ready, EV_INTERACTION, i))

        def reschedule(c: int, now: float) -> None:
            schedule_internals(c, now)
            start = p.comp_inter_start[c]
            for k in range(start, start + p.comp_inter_count[c]):
                schedule_interaction(p.comp_inter[k], now)

        def record_interval(c: int, t: float) -> None:
            dev = p.comp_device[c]
            if dev < 0:
                return
            mode = p.loc_mode[p.loc_offset[c] + loc[c]]
            if mode < 0 or t <= entered[c]:
                return
            start, dur = entered[c], t - entered[c]
            if full:
                out.interval_dev.append(dev)
                out.interval_mode.append(mode)
                out.interval_start.append(start)
                out.interval_dur.append(dur)
            else:
                out.mode_total[dev * 4 + mode] += dur
                out.mode_work[dev * 4 + mode] += (
                    work_seconds_before(start + dur) - work_seconds_before(start)
                )

        def apply_actions(t: int, c: int, rng: Rng) -> None:
            start = p.tr_act_start[t]
            for k in range(start, start + p.tr_act_count[t]):
                op = p.act_op[k]
                if op == A_SET:
                    variables[p.act_a[k]] = p.act_x[k]
                elif op == A_ADD:
                    variables[p.act_a[k]] += p.act_x[k]
                elif op == A_ADDVAR:
                    variables[p.act_a[k]] += variables[p.act_b[k]]
                else:  # A_BERNOULLI
                    prob = p.act_x[k] + p.act_y[k] * env_m
                    prob = 0.0 if prob < 0.0 else (1.0 if prob > 1.0 else prob)
                    variables[p.act_a[k]] = 1.0 if rng.random() < prob else 0.0

        def emit_peripherals(t: int, c: int, now: float, rng: Rng) -> None:
            dev = p.comp_device[c]
            start = p.tr_per_start[t]
            for k in range(start, start + p.tr_per_count[t]):
                prob = p.per_prob[k]
                if prob < 1.0 and rng.random() >= prob:
                    continue
                if dev < 0:
                    continue
                if full:
                    out.per_time.append(now)
                    out.per_dev.append(dev)
                    out.per_event.append(p.per_event[k])
                else:
                    out.per_counts[dev * len(p.event_names) + p.per_event[k]] += 1

        def record_event(t: int, c: int, now: float) -> None:
            if full:
                out.event_time.append(now)
                out.event_comp.append(c)
                out.event_label.append(p.tr_label[t])

        def snapshot(now: float) -> dict:
            return {
                "time": now,
                "components": {
                    p.comp_ids[c]: {
                        "location": p.loc_names[p.loc_offset[c] + loc[c]].split(":", 1)[1],
                        "busy_until": busy[c],
                        "variables": {
                            p.var_names[s].split(":", 1)[1]: variables[s]
                            for s in range(
                                p.var_offset[c],
                                p.var_offset[c + 1] if c + 1 < n else p.n_vars,
                            )
                        },
                    }
                    for c in range(n)
                },
            }

        def fire_internal(t: int, now: float) -> None:
            c = p.tr_comp[t]
            record_interval(c, now)
            dwell = draw_duration(t, crng[c], now)
            loc[c] = p.tr_dst[t]
            entered[c] = now
            busy[c] = now + dwell
            apply_actions(t, c, crng[c])
            emit_peripherals(t, c, now, crng[c])
            record_event(t, c, now)
            sched_tr[t] = math.nan
            reschedule(c, now)

        def fire_interaction(i: int, arcs: list[int], now: float) -> None:
            start = p.inter_part_start[i]
            comps = [p.ip_comp[k] for k in range(start, start + p.inter_part_count[i])]
            dwell = 0.0
            for c, a in zip(comps, arcs):
                d = draw_duration(a, crng[c], now)
                if d > dwell:
                    dwell = d
            preserve = []
            for c, a in zip(comps, arcs):
                keep = (
                    p.tr_src[a] == p.tr_dst[a]
                    and p.loc_class[p.loc_offset[c] + loc[c]] != LOC_HARD
                )
                preserve.append(keep)
                if not keep:
                    record_interval(c, now)
            tstart = p.inter_tf_start[i]
            for k in range(tstart, tstart + p.inter_tf_count[i]):
                variables[p.tf_dst_slot[k]] = variables[p.tf_src_slot[k]]
            for c, a, keep in zip(comps, arcs, preserve):
                if not keep:
                    loc[c] = p.tr_dst[a]
                    entered[c] = now
                    busy[c] = now + dwell
                apply_actions(a, c, crng[c])
                emit_peripherals(a, c, now, crng[c])
                record_event(a, c, now)
            sched_inter[i] = math.nan
            for c in comps:
                reschedule(c, now)

        # -- main loop ------------------------------------------------------

        for c in range(n):
            schedule_internals(c, 0.0)
        for i in range(p.n_inter):
            schedule_interaction(i, 0.0)

        last_t = -1.0
        stall = 0
        while heap:
            t, kind, key = heappop(heap)
            if t >= horizon:
                break
            # validate
            if kind == EV_INTERNAL:
                c = p.tr_comp[key]
                if (
                    sched_tr[key] != t
                    or loc[c] != p.tr_src[key]
                    or not guard_ok(key)
                    or busy[c] > t
                ):
                    continue
                first_arcs = None
            else:
                if sched_inter[key] != t:
                    continue
                first_arcs = resolve_arcs(key)
                ready = interaction_ready(key, t)
                if first_arcs is None or blocked(key) or ready is None or ready > t:
                    sched_inter[key] = math.nan
                    continue

            batch = [(kind, key)]
            inter_arcs: dict[int, list[int]] = {}
            if kind == EV_INTERACTION:
                inter_arcs[key] = first_arcs
            # the 64-candidate cap matches the compiled kernel's batch buffer
            while heap and heap[0][0] == t and len(batch) < 64:
                _, k2, y2 = heappop(heap)
                if (k2, y2) in batch:
                    continue
                if k2 == EV_INTERNAL:
                    c2 = p.tr_comp[y2]
                    if (
                        sched_tr[y2] == t
                        and loc[c2] == p.tr_src[y2]
                        and guard_ok(y2)
                        and busy[c2] <= t
                    ):
                        batch.append((k2, y2))
                else:
                    if sched_inter[y2] != t:
                        continue
                    arcs2 = resolve_arcs(y2)
                    ready2 = interaction_ready(y2, t)
                    if arcs2 is None or blocked(y2) or ready2 is None or ready2 > t:
                        sched_inter[y2] = math.nan
                        continue
                    inter_arcs[y2] = arcs2
                    batch.append((k2, y2))

            batch.sort()
            idx = grng.randrange(len(batch)) if len(batch) > 1 else 0
            for j, (kj, yj) in enumerate(batch):
                if j != idx:
                    heappush(heap, (t, kj, yj))

            kind, key = batch[idx]
            if kind == EV_INTERNAL:
                fire_internal(key, t)
            else:
                fire_interaction(key, inter_arcs[key], t)

            if t <= last_t:
                stall += 1
                if stall > LIVELOCK_LIMIT:
                    raise DeadlockError(
                        f"no time-advancing transition at t={t:.6f}", snapshot(t)
                    )
            else:
                stall = 0
                last_t = t

        # truncate the in-progress residency of every billed component
        for c in range(n):
            record_interval(c, horizon)

        return out
