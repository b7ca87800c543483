# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event-loop kernel.

Executes the same lowered program as iesim._engine_py.PurePythonCore with
the same SplitMix64 random streams and the same floating-point expressions,
so results are bit-identical between the two cores. Any semantic change
must be made in both files.
"""

from libc.math cimport NAN as C_NAN, exp, fmod, log, sqrt
from libc.stdint cimport int32_t, uint64_t
from libc.stdlib cimport free, malloc, realloc

import numpy as np

from ._engine_py import DeadlockError, RawRun

cdef int LIVELOCK_LIMIT = 100000

cdef double DAY_S = 86400.0
cdef double WORK_START_S = 28800.0
cdef double WORK_END_S = 64800.0
cdef double WORK_DAY_S = 36000.0

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15u
cdef double U53 = 1.0 / 9007199254740992.0

# guard opcodes (keep in sync with iesim.lowering)
cdef enum:
    G_TRUE = 0
    G_POS = 1
    G_ZERO = 2
    G_AND_POS = 3
    G_NAND_POS = 4
    G_FALSE = 5
    G_NONPOS = 6

cdef enum:
    A_SET = 0
    A_ADD = 1
    A_ADDVAR = 2
    A_BERNOULLI = 3

cdef enum:
    D_DIST = 0
    D_SCALED = 1
    D_SCHEDULE = 2

cdef enum:
    EV_INTERNAL = 0
    EV_INTERACTION = 1

cdef enum:
    LOC_HARD = 0
    LOC_SOFT = 1
    LOC_ABSORB = 2

# distribution kind codes (keep in sync with iesim.stochastics.KIND_CODE)
cdef enum:
    K_DIRAC = 0
    K_UNIFORM = 1
    K_NORMAL = 2
    K_POISSON = 3
    K_EXPONENTIAL = 4


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9u
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBu
    return z ^ (z >> 31)


cdef inline uint64_t _child_seed(uint64_t seed, uint64_t index) noexcept nogil:
    return _mix64(seed + (index + 1) * GOLDEN)


cdef inline double _random(uint64_t *state) noexcept nogil:
    state[0] = state[0] + GOLDEN
    return <double>(_mix64(state[0]) >> 11) * U53


cdef inline double _normal(uint64_t *state, double mu, double sigma) noexcept nogil:
    cdef double u, v, s
    while True:
        u = 2.0 * _random(state) - 1.0
        v = 2.0 * _random(state) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return mu + sigma * u * sqrt(-2.0 * log(s) / s)


cdef double _poisson(uint64_t *state, double lam) noexcept nogil:
    cdef double half, limit, prod
    cdef double k
    if lam <= 0.0:
        return 0.0
    if lam > 60.0:
        half = lam * 0.5
        return _poisson(state, half) + _poisson(state, lam - half)
    limit = exp(-lam)
    k = 0.0
    prod = 1.0
    while True:
        prod *= _random(state)
        if prod <= limit:
            return k
        k += 1.0


cdef inline double _work_seconds_before(double t) noexcept nogil:
    cdef double tod, days, partial
    if t <= 0.0:
        return 0.0
    tod = fmod(t, DAY_S)
    days = (t - tod) / DAY_S
    partial = tod - WORK_START_S
    if partial < 0.0:
        partial = 0.0
    elif partial > WORK_DAY_S:
        partial = WORK_DAY_S
    return days * WORK_DAY_S + partial


cdef struct GrowBuf:
    double *data
    Py_ssize_t size
    Py_ssize_t cap


cdef inline int _grow_push(GrowBuf *buf, double value) except -1 nogil:
    cdef double *fresh
    if buf.size == buf.cap:
        buf.cap = buf.cap * 2 if buf.cap else 4096
        fresh = <double *> realloc(buf.data, buf.cap * sizeof(double))
        if fresh == NULL:
            with gil:
                raise MemoryError()
        buf.data = fresh
    buf.data[buf.size] = value
    buf.size += 1
    return 0


cdef object _take_array(GrowBuf *buf):
    cdef Py_ssize_t i
    out = np.empty(buf.size, dtype=np.float64)
    cdef double[::1] view = out
    for i in range(buf.size):
        view[i] = buf.data[i]
    free(buf.data)
    buf.data = NULL
    buf.size = 0
    buf.cap = 0
    return out


cdef class KernelCore:
    """Compiled twin of PurePythonCore over the same lowered program."""

    cdef object program
    cdef int n_comp, n_tr, n_inter, n_vars, n_dev, n_event, n_regime, n_gloc
    cdef int32_t[::1] comp_initial, comp_device, loc_offset, loc_count, var_offset
    cdef int32_t[::1] loc_mode, loc_class
    cdef double[::1] var_init
    cdef int32_t[::1] tr_comp, tr_src, tr_dst, tr_label, tr_exported
    cdef int32_t[::1] tr_guard_op, tr_guard_a, tr_guard_b
    cdef int32_t[::1] tr_dur_kind, tr_dur_dist
    cdef double[:, ::1] tr_dur_p
    cdef int32_t[::1] tr_act_start, tr_act_count, tr_per_start, tr_per_count
    cdef int32_t[::1] act_op, act_a, act_b
    cdef double[::1] act_x, act_y
    cdef int32_t[::1] per_event
    cdef double[::1] per_prob
    cdef int32_t[::1] inter_part_start, inter_part_count, ip_comp, ip_arc_offset, ip_arc
    cdef int32_t[::1] inter_tf_start, inter_tf_count, tf_src_slot, tf_dst_slot
    cdef int32_t[::1] inter_higher_start, inter_higher_count, inter_higher
    cdef int32_t[::1] comp_inter_start, comp_inter_count, comp_inter
    cdef double[::1] regime_levels, regime_probs
    cdef int32_t[::1] internal_at_start, internal_at_count, internal_at

    name = "kernel"

    def __init__(self, program):
        self.program = program
        p = program

        def ivec(xs):
            return np.asarray(xs, dtype=np.int32)

        def dvec(xs):
            return np.asarray(xs, dtype=np.float64)

        self.n_comp = p.n_comp
        self.n_tr = p.n_tr
        self.n_inter = p.n_inter
        self.n_vars = p.n_vars
        self.n_dev = len(p.device_names)
        self.n_event = len(p.event_names)
        self.n_regime = len(p.regime_levels)
        self.n_gloc = len(p.loc_names)

        self.comp_initial = ivec(p.comp_initial)
        self.comp_device = ivec(p.comp_device)
        self.loc_offset = ivec(p.loc_offset)
        self.loc_count = ivec(p.loc_count)
        self.var_offset = ivec(p.var_offset)
        self.loc_mode = ivec(p.loc_mode)
        self.loc_class = ivec(p.loc_class)
        self.var_init = dvec(p.var_init)
        self.tr_comp = ivec(p.tr_comp)
        self.tr_src = ivec(p.tr_src)
        self.tr_dst = ivec(p.tr_dst)
        self.tr_label = ivec(p.tr_label)
        self.tr_exported = ivec(p.tr_exported)
        self.tr_guard_op = ivec(p.tr_guard_op)
        self.tr_guard_a = ivec(p.tr_guard_a)
        self.tr_guard_b = ivec(p.tr_guard_b)
        self.tr_dur_kind = ivec(p.tr_dur_kind)
        self.tr_dur_dist = ivec(p.tr_dur_dist)
        durp = np.asarray(p.tr_dur_p, dtype=np.float64)
        self.tr_dur_p = durp.reshape(-1, 5) if durp.size else np.zeros((0, 5))
        self.tr_act_start = ivec(p.tr_act_start)
        self.tr_act_count = ivec(p.tr_act_count)
        self.tr_per_start = ivec(p.tr_per_start)
        self.tr_per_count = ivec(p.tr_per_count)
        self.act_op = ivec(p.act_op)
        self.act_a = ivec(p.act_a)
        self.act_b = ivec(p.act_b)
        self.act_x = dvec(p.act_x)
        self.act_y = dvec(p.act_y)
        self.per_event = ivec(p.per_event)
        self.per_prob = dvec(p.per_prob)
        self.inter_part_start = ivec(p.inter_part_start)
        self.inter_part_count = ivec(p.inter_part_count)
        self.ip_comp = ivec(p.ip_comp)
        self.ip_arc_offset = ivec(p.ip_arc_offset)
        self.ip_arc = ivec(p.ip_arc)
        self.inter_tf_start = ivec(p.inter_tf_start)
        self.inter_tf_count = ivec(p.inter_tf_count)
        self.tf_src_slot = ivec(p.tf_src_slot)
        self.tf_dst_slot = ivec(p.tf_dst_slot)
        self.inter_higher_start = ivec(p.inter_higher_start)
        self.inter_higher_count = ivec(p.inter_higher_count)
        self.inter_higher = ivec(p.inter_higher)
        self.comp_inter_start = ivec(p.comp_inter_start)
        self.comp_inter_count = ivec(p.comp_inter_count)
        self.comp_inter = ivec(p.comp_inter)
        self.regime_levels = dvec(p.regime_levels)
        self.regime_probs = dvec(p.regime_probs)

        # internal arcs grouped by global location, like PurePythonCore
        groups: list = [[] for _ in range(self.n_gloc)]
        for t in range(p.n_tr):
            if not p.tr_exported[t]:
                groups[p.loc_offset[p.tr_comp[t]] + p.tr_src[t]].append(t)
        starts, counts, flat = [], [], []
        for g in groups:
            starts.append(len(flat))
            counts.append(len(g))
            flat.extend(g)
        self.internal_at_start = ivec(starts)
        self.internal_at_count = ivec(counts)
        self.internal_at = ivec(flat if flat else [0][:0])

    def run(self, seed, double horizon, record="full"):
        cdef bint full = record == "full"
        cdef int n = self.n_comp
        cdef int i, c, k, t, j
        out = RawRun(self.n_dev, self.n_event)

        # mutable replica state
        cdef int32_t *loc = <int32_t *> malloc(n * sizeof(int32_t))
        cdef double *busy = <double *> malloc(n * sizeof(double))
        cdef double *entered = <double *> malloc(n * sizeof(double))
        cdef double *variables = <double *> malloc(max(self.n_vars, 1) * sizeof(double))
        cdef uint64_t *crng = <uint64_t *> malloc(n * sizeof(uint64_t))
        cdef double *sched_tr = <double *> malloc(max(self.n_tr, 1) * sizeof(double))
        cdef double *sched_inter = <double *> malloc(max(self.n_inter, 1) * sizeof(double))
        # summary accumulators
        cdef double *mode_total = <double *> malloc(max(self.n_dev * 4, 1) * sizeof(double))
        cdef double *mode_work = <double *> malloc(max(self.n_dev * 4, 1) * sizeof(double))
        cdef long *per_counts = <long *> malloc(max(self.n_dev * self.n_event, 1) * sizeof(long))
        # heap
        cdef Py_ssize_t heap_cap = 1024
        cdef Py_ssize_t heap_size = 0
        cdef double *h_time = <double *> malloc(heap_cap * sizeof(double))
        cdef int32_t *h_kind = <int32_t *> malloc(heap_cap * sizeof(int32_t))
        cdef int32_t *h_key = <int32_t *> malloc(heap_cap * sizeof(int32_t))
        # full-mode record buffers
        cdef GrowBuf r_idev, r_imode, r_istart, r_idur
        cdef GrowBuf r_etime, r_ecomp, r_elabel, r_ptime, r_pdev, r_pevent
        r_idev.data = NULL; r_idev.size = 0; r_idev.cap = 0
        r_imode.data = NULL; r_imode.size = 0; r_imode.cap = 0
        r_istart.data = NULL; r_istart.size = 0; r_istart.cap = 0
        r_idur.data = NULL; r_idur.size = 0; r_idur.cap = 0
        r_etime.data = NULL; r_etime.size = 0; r_etime.cap = 0
        r_ecomp.data = NULL; r_ecomp.size = 0; r_ecomp.cap = 0
        r_elabel.data = NULL; r_elabel.size = 0; r_elabel.cap = 0
        r_ptime.data = NULL; r_ptime.size = 0; r_ptime.cap = 0
        r_pdev.data = NULL; r_pdev.size = 0; r_pdev.cap = 0
        r_pevent.data = NULL; r_pevent.size = 0; r_pevent.cap = 0

        if (loc == NULL or busy == NULL or entered == NULL or variables == NULL
                or crng == NULL or sched_tr == NULL or sched_inter == NULL
                or mode_total == NULL or mode_work == NULL or per_counts == NULL
                or h_time == NULL or h_kind == NULL or h_key == NULL):
            raise MemoryError()

        cdef uint64_t grng = <uint64_t> (<object> seed & 0xFFFFFFFFFFFFFFFF)
        cdef double u, acc, env_m
        cdef double NAN = float("nan")
        cdef double t_now, tmin, dwell, last_t
        cdef int stall = 0
        cdef int kind, key, kind2, key2
        cdef Py_ssize_t bi, bn
        cdef int batch_kind[64]
        cdef int batch_key[64]
        cdef int deadlock = 0
        cdef double deadlock_t = 0.0

        try:
            for c in range(n):
                loc[c] = self.comp_initial[c]
                busy[c] = 0.0
                entered[c] = 0.0
                crng[c] = _child_seed(grng, <uint64_t> c + 1)
            for i in range(self.n_vars):
                variables[i] = self.var_init[i]
            for i in range(self.n_dev * 4):
                mode_total[i] = 0.0
                mode_work[i] = 0.0
            for i in range(self.n_dev * self.n_event):
                per_counts[i] = 0
            for i in range(self.n_tr):
                sched_tr[i] = NAN
            for i in range(self.n_inter):
                sched_inter[i] = NAN

            # regime draw is the replica stream's first use
            u = _random(&grng)
            env_m = self.regime_levels[self.n_regime - 1]
            acc = 0.0
            for i in range(self.n_regime):
                acc += self.regime_probs[i]
                if u < acc:
                    env_m = self.regime_levels[i]
                    break
            out.env_m = env_m

            # ------------------------------------------------ inline helpers

            # (cython closures are costly; helpers below are cdef methods)

            for c in range(n):
                heap_size = self._schedule_internals(
                    c, 0.0, loc, busy, variables, sched_tr,
                    &h_time, &h_kind, &h_key, heap_size, &heap_cap)
            for i in range(self.n_inter):
                heap_size = self._schedule_interaction(
                    i, 0.0, loc, busy, variables, sched_inter,
                    &h_time, &h_kind, &h_key, heap_size, &heap_cap)

            last_t = -1.0
            while heap_size > 0:
                tmin = h_time[0]
                kind = h_kind[0]
                key = h_key[0]
                heap_size = self._heap_pop(h_time, h_kind, h_key, heap_size)
                if tmin >= horizon:
                    break
                # validate
                if kind == EV_INTERNAL:
                    c = self.tr_comp[key]
                    if (sched_tr[key] != tmin or loc[c] != self.tr_src[key]
                            or not self._guard_ok(key, variables) or busy[c] > tmin):
                        continue
                else:
                    if sched_inter[key] != tmin:
                        continue
                    if not self._inter_valid(key, tmin, loc, busy, variables):
                        sched_inter[key] = NAN
                        continue

                bn = 0
                batch_kind[bn] = kind
                batch_key[bn] = key
                bn += 1
                while heap_size > 0 and h_time[0] == tmin and bn < 64:
                    kind2 = h_kind[0]
                    key2 = h_key[0]
                    heap_size = self._heap_pop(h_time, h_kind, h_key, heap_size)
                    j = 0
                    for bi in range(bn):
                        if batch_kind[bi] == kind2 and batch_key[bi] == key2:
                            j = 1
                            break
                    if j:
                        continue
                    if kind2 == EV_INTERNAL:
                        c = self.tr_comp[key2]
                        if (sched_tr[key2] == tmin and loc[c] == self.tr_src[key2]
                                and self._guard_ok(key2, variables) and busy[c] <= tmin):
                            batch_kind[bn] = kind2
                            batch_key[bn] = key2
                            bn += 1
                    else:
                        if sched_inter[key2] != tmin:
                            continue
                        if not self._inter_valid(key2, tmin, loc, busy, variables):
                            sched_inter[key2] = NAN
                            continue
                        batch_kind[bn] = kind2
                        batch_key[bn] = key2
                        bn += 1

                # canonical order, then a uniform choice
                self._sort_batch(batch_kind, batch_key, bn)
                if bn > 1:
                    u = _random(&grng)
                    bi = <Py_ssize_t> (u * bn)
                    if bi > bn - 1:
                        bi = bn - 1
                else:
                    bi = 0
                for j in range(bn):
                    if j != bi:
                        heap_size = self._heap_push(
                            &h_time, &h_kind, &h_key, heap_size, &heap_cap,
                            tmin, batch_kind[j], batch_key[j])

                kind = batch_kind[bi]
                key = batch_key[bi]
                if kind == EV_INTERNAL:
                    heap_size = self._fire_internal(
                        key, tmin, full, loc, busy, entered, variables, crng,
                        env_m, sched_tr, sched_inter,
                        &h_time, &h_kind, &h_key, heap_size, &heap_cap,
                        mode_total, mode_work, per_counts,
                        &r_idev, &r_imode, &r_istart, &r_idur,
                        &r_etime, &r_ecomp, &r_elabel,
                        &r_ptime, &r_pdev, &r_pevent)
                else:
                    heap_size = self._fire_interaction(
                        key, tmin, full, loc, busy, entered, variables, crng,
                        env_m, sched_tr, sched_inter,
                        &h_time, &h_kind, &h_key, heap_size, &heap_cap,
                        mode_total, mode_work, per_counts,
                        &r_idev, &r_imode, &r_istart, &r_idur,
                        &r_etime, &r_ecomp, &r_elabel,
                        &r_ptime, &r_pdev, &r_pevent)

                if tmin <= last_t:
                    stall += 1
                    if stall > LIVELOCK_LIMIT:
                        deadlock = 1
                        deadlock_t = tmin
                        break
                else:
                    stall = 0
                    last_t = tmin

            if deadlock:
                raise DeadlockError(
                    f"no time-advancing transition at t={deadlock_t:.6f}",
                    self._snapshot(deadlock_t, loc, busy, variables),
                )

            for c in range(n):
                self._record_interval(
                    c, horizon, full, loc, entered,
                    mode_total, mode_work,
                    &r_idev, &r_imode, &r_istart, &r_idur)

            if full:
                out.interval_dev = _take_array(&r_idev).astype(np.int64)
                out.interval_mode = _take_array(&r_imode).astype(np.int64)
                out.interval_start = _take_array(&r_istart)
                out.interval_dur = _take_array(&r_idur)
                out.event_time = _take_array(&r_etime)
                out.event_comp = _take_array(&r_ecomp).astype(np.int64)
                out.event_label = _take_array(&r_elabel).astype(np.int64)
                out.per_time = _take_array(&r_ptime)
                out.per_dev = _take_array(&r_pdev).astype(np.int64)
                out.per_event = _take_array(&r_pevent).astype(np.int64)
            else:
                out.mode_total = [mode_total[i] for i in range(self.n_dev * 4)]
                out.mode_work = [mode_work[i] for i in range(self.n_dev * 4)]
                out.per_counts = [per_counts[i] for i in range(self.n_dev * self.n_event)]
            return out
        finally:
            free(loc); free(busy); free(entered); free(variables); free(crng)
            free(sched_tr); free(sched_inter)
            free(mode_total); free(mode_work); free(per_counts)
            free(h_time); free(h_kind); free(h_key)
            free(r_idev.data); free(r_imode.data); free(r_istart.data); free(r_idur.data)
            free(r_etime.data); free(r_ecomp.data); free(r_elabel.data)
            free(r_ptime.data); free(r_pdev.data); free(r_pevent.data)

    # ------------------------------------------------------------ helpers

    cdef bint _guard_ok(self, int t, double *variables) noexcept nogil:
        cdef int op = self.tr_guard_op[t]
        cdef double a, b
        if op == G_TRUE:
            return True
        a = variables[self.tr_guard_a[t]]
        if op == G_POS:
            return a > 0.0
        if op == G_ZERO:
            return a == 0.0
        if op == G_NONPOS:
            return a <= 0.0
        if op == G_FALSE:
            return False
        b = variables[self.tr_guard_b[t]]
        if op == G_AND_POS:
            return a > 0.0 and b > 0.0
        return not (a > 0.0 and b > 0.0)  # G_NAND_POS

    cdef double _draw_duration(self, int t, uint64_t *rng, double now, double env_m) noexcept nogil:
        cdef int kind = self.tr_dur_kind[t]
        cdef int dist
        cdef double base, x, tod
        if kind == D_SCHEDULE:
            tod = fmod(now, DAY_S)
            if WORK_START_S <= tod < WORK_END_S:
                base = self.tr_dur_p[t, 0]
            else:
                base = self.tr_dur_p[t, 1]
            if self.tr_dur_p[t, 4] != 0.0:
                base /= env_m
            return base * (self.tr_dur_p[t, 2]
                           + (self.tr_dur_p[t, 3] - self.tr_dur_p[t, 2]) * _random(rng))
        dist = self.tr_dur_dist[t]
        if dist == K_DIRAC:
            x = self.tr_dur_p[t, 0]
        elif dist == K_UNIFORM:
            x = self.tr_dur_p[t, 0] + (self.tr_dur_p[t, 1] - self.tr_dur_p[t, 0]) * _random(rng)
        elif dist == K_NORMAL:
            x = _normal(rng, self.tr_dur_p[t, 0], self.tr_dur_p[t, 1])
            if x <= 0.0:
                x = 0.0
        elif dist == K_POISSON:
            x = _poisson(rng, self.tr_dur_p[t, 0]) * self.tr_dur_p[t, 2]
        else:
            x = -log(1.0 - _random(rng)) / self.tr_dur_p[t, 0]
        if kind == D_SCALED:
            x *= 1.0 + self.tr_dur_p[t, 3] * env_m + self.tr_dur_p[t, 4] * env_m * env_m
        return x

    # heap of (time, kind, key) ordered lexicographically

    cdef Py_ssize_t _heap_push(self, double **h_time, int32_t **h_kind, int32_t **h_key,
                               Py_ssize_t size, Py_ssize_t *cap,
                               double t, int kind, int key) except -1:
        cdef double *nt
        cdef int32_t *nk
        cdef int32_t *ny
        cdef Py_ssize_t i, parent
        if size == cap[0]:
            cap[0] = cap[0] * 2
            nt = <double *> realloc(h_time[0], cap[0] * sizeof(double))
            nk = <int32_t *> realloc(h_kind[0], cap[0] * sizeof(int32_t))
            ny = <int32_t *> realloc(h_key[0], cap[0] * sizeof(int32_t))
            if nt == NULL or nk == NULL or ny == NULL:
                raise MemoryError()
            h_time[0] = nt
            h_kind[0] = nk
            h_key[0] = ny
        cdef double *T = h_time[0]
        cdef int32_t *K = h_kind[0]
        cdef int32_t *Y = h_key[0]
        i = size
        T[i] = t
        K[i] = kind
        Y[i] = key
        while i > 0:
            parent = (i - 1) >> 1
            if self._heap_less(T, K, Y, i, parent):
                T[i], T[parent] = T[parent], T[i]
                K[i], K[parent] = K[parent], K[i]
                Y[i], Y[parent] = Y[parent], Y[i]
                i = parent
            else:
                break
        return size + 1

    cdef inline bint _heap_less(self, double *T, int32_t *K, int32_t *Y,
                                Py_ssize_t a, Py_ssize_t b) noexcept nogil:
        if T[a] != T[b]:
            return T[a] < T[b]
        if K[a] != K[b]:
            return K[a] < K[b]
        return Y[a] < Y[b]

    cdef Py_ssize_t _heap_pop(self, double *T, int32_t *K, int32_t *Y,
                              Py_ssize_t size) noexcept nogil:
        cdef Py_ssize_t i = 0, child
        size -= 1
        T[0] = T[size]
        K[0] = K[size]
        Y[0] = Y[size]
        while True:
            child = 2 * i + 1
            if child >= size:
                break
            if child + 1 < size and self._heap_less(T, K, Y, child + 1, child):
                child += 1
            if self._heap_less(T, K, Y, child, i):
                T[i], T[child] = T[child], T[i]
                K[i], K[child] = K[child], K[i]
                Y[i], Y[child] = Y[child], Y[i]
                i = child
            else:
                break
        return size

    cdef void _sort_batch(self, int *kinds, int *keys, Py_ssize_t n) noexcept nogil:
        cdef Py_ssize_t i, j
        cdef int k, y
        for i in range(1, n):
            k = kinds[i]
            y = keys[i]
            j = i - 1
            while j >= 0 and (kinds[j] > k or (kinds[j] == k and keys[j] > y)):
                kinds[j + 1] = kinds[j]
                keys[j + 1] = keys[j]
                j -= 1
            kinds[j + 1] = k
            keys[j + 1] = y

    # scheduling

    cdef Py_ssize_t _schedule_internals(self, int c, double now,
                                        int32_t *loc, double *busy, double *variables,
                                        double *sched_tr,
                                        double **h_time, int32_t **h_kind, int32_t **h_key,
                                        Py_ssize_t heap_size, Py_ssize_t *heap_cap) except -1:
        cdef int g = self.loc_offset[c] + loc[c]
        cdef int s = self.internal_at_start[g]
        cdef int i, t
        cdef double ft
        for i in range(s, s + self.internal_at_count[g]):
            t = self.internal_at[i]
            if self._guard_ok(t, variables):
                ft = busy[c] if busy[c] > now else now
                if sched_tr[t] != ft:
                    sched_tr[t] = ft
                    heap_size = self._heap_push(h_time, h_kind, h_key, heap_size,
                                                heap_cap, ft, EV_INTERNAL, t)
            else:
                sched_tr[t] = C_NAN
        return heap_size

    cdef bint _state_enabled(self, int i, int32_t *loc, double *variables) noexcept nogil:
        cdef int s = self.inter_part_start[i]
        cdef int k, c, a
        for k in range(s, s + self.inter_part_count[i]):
            c = self.ip_comp[k]
            a = self.ip_arc[self.ip_arc_offset[k] + loc[c]]
            if a < 0 or not self._guard_ok(a, variables):
                return False
        return True

    cdef bint _blocked(self, int i, int32_t *loc, double *variables) noexcept nogil:
        cdef int s = self.inter_higher_start[i]
        cdef int k
        for k in range(s, s + self.inter_higher_count[i]):
            if self._state_enabled(self.inter_higher[k], loc, variables):
                return True
        return False

    cdef double _interaction_ready(self, int i, double now,
                                   int32_t *loc, double *busy, double *variables) noexcept nogil:
        """Ready time, or -1 when not enabled."""
        cdef int s = self.inter_part_start[i]
        cdef int k, c, a, cls
        cdef bint waits
        cdef double ready = now
        for k in range(s, s + self.inter_part_count[i]):
            c = self.ip_comp[k]
            a = self.ip_arc[self.ip_arc_offset[k] + loc[c]]
            if a < 0 or not self._guard_ok(a, variables):
                return -1.0
            cls = self.loc_class[self.loc_offset[c] + loc[c]]
            waits = cls == LOC_HARD or (cls == LOC_ABSORB and self.tr_src[a] != self.tr_dst[a])
            if waits and busy[c] > ready:
                ready = busy[c]
        return ready

    cdef bint _inter_valid(self, int i, double t,
                           int32_t *loc, double *busy, double *variables) noexcept nogil:
        cdef double ready = self._interaction_ready(i, t, loc, busy, variables)
        if ready < 0.0 or ready > t:
            return False
        return not self._blocked(i, loc, variables)

    cdef Py_ssize_t _schedule_interaction(self, int i, double now,
                                          int32_t *loc, double *busy, double *variables,
                                          double *sched_inter,
                                          double **h_time, int32_t **h_kind, int32_t **h_key,
                                          Py_ssize_t heap_size, Py_ssize_t *heap_cap) except -1:
        cdef double ready = self._interaction_ready(i, now, loc, busy, variables)
        if ready < 0.0 or self._blocked(i, loc, variables):
            sched_inter[i] = C_NAN
            return heap_size
        if sched_inter[i] != ready:
            sched_inter[i] = ready
            heap_size = self._heap_push(h_time, h_kind, h_key, heap_size, heap_cap,
                                        ready, EV_INTERACTION, i)
        return heap_size

    cdef Py_ssize_t _reschedule(self, int c, double now,
                                int32_t *loc, double *busy, double *variables,
                                double *sched_tr, double *sched_inter,
                                double **h_time, int32_t **h_kind, int32_t **h_key,
                                Py_ssize_t heap_size, Py_ssize_t *heap_cap) except -1:
        cdef int s = self.comp_inter_start[c]
        cdef int k
        heap_size = self._schedule_internals(c, now, loc, busy, variables, sched_tr,
                                             h_time, h_kind, h_key, heap_size, heap_cap)
        for k in range(s, s + self.comp_inter_count[c]):
            heap_size = self._schedule_interaction(self.comp_inter[k], now,
                                                   loc, busy, variables, sched_inter,
                                                   h_time, h_kind, h_key, heap_size, heap_cap)
        return heap_size

    # recording

    cdef int _record_interval(self, int c, double t, bint full,
                              int32_t *loc, double *entered,
                              double *mode_total, double *mode_work,
                              GrowBuf *r_idev, GrowBuf *r_imode,
                              GrowBuf *r_istart, GrowBuf *r_idur) except -1:
        cdef int dev = self.comp_device[c]
        cdef int mode
        cdef double start, dur
        if dev < 0:
            return 0
        mode = self.loc_mode[self.loc_offset[c] + loc[c]]
        if mode < 0 or t <= entered[c]:
            return 0
        start = entered[c]
        dur = t - start
        if full:
            _grow_push(r_idev, dev)
            _grow_push(r_imode, mode)
            _grow_push(r_istart, start)
            _grow_push(r_idur, dur)
        else:
            mode_total[dev * 4 + mode] += dur
            mode_work[dev * 4 + mode] += (
                _work_seconds_before(start + dur) - _work_seconds_before(start)
            )
        return 0

    cdef void _apply_actions(self, int t, uint64_t *rng, double *variables,
                             double env_m) noexcept nogil:
        cdef int s = self.tr_act_start[t]
        cdef int k, op
        cdef double prob
        for k in range(s, s + self.tr_act_count[t]):
            op = self.act_op[k]
            if op == A_SET:
                variables[self.act_a[k]] = self.act_x[k]
            elif op == A_ADD:
                variables[self.act_a[k]] += self.act_x[k]
            elif op == A_ADDVAR:
                variables[self.act_a[k]] += variables[self.act_b[k]]
            else:
                prob = self.act_x[k] + self.act_y[k] * env_m
                if prob < 0.0:
                    prob = 0.0
                elif prob > 1.0:
                    prob = 1.0
                variables[self.act_a[k]] = 1.0 if _random(rng) < prob else 0.0

    cdef int _emit_peripherals(self, int t, int c, double now, uint64_t *rng, bint full,
                               long *per_counts,
                               GrowBuf *r_ptime, GrowBuf *r_pdev, GrowBuf *r_pevent) except -1:
        cdef int dev = self.comp_device[c]
        cdef int s = self.tr_per_start[t]
        cdef int k
        cdef double prob
        for k in range(s, s + self.tr_per_count[t]):
            prob = self.per_prob[k]
            if prob < 1.0 and _random(rng) >= prob:
                continue
            if dev < 0:
                continue
            if full:
                _grow_push(r_ptime, now)
                _grow_push(r_pdev, dev)
                _grow_push(r_pevent, self.per_event[k])
            else:
                per_counts[dev * self.n_event + self.per_event[k]] += 1
        return 0

    # firing

    cdef Py_ssize_t _fire_internal(self, int t, double now, bint full,
                                   int32_t *loc, double *busy, double *entered,
                                   double *variables, uint64_t *crng, double env_m,
                                   double *sched_tr, double *sched_inter,
                                   double **h_time, int32_t **h_kind, int32_t **h_key,
                                   Py_ssize_t heap_size, Py_ssize_t *heap_cap,
                                   double *mode_total, double *mode_work, long *per_counts,
                                   GrowBuf *r_idev, GrowBuf *r_imode,
                                   GrowBuf *r_istart, GrowBuf *r_idur,
                                   GrowBuf *r_etime, GrowBuf *r_ecomp, GrowBuf *r_elabel,
                                   GrowBuf *r_ptime, GrowBuf *r_pdev, GrowBuf *r_pevent) except -1:
        cdef int c = self.tr_comp[t]
        cdef double dwell
        self._record_interval(c, now, full, loc, entered, mode_total, mode_work,
                              r_idev, r_imode, r_istart, r_idur)
        dwell = self._draw_duration(t, &crng[c], now, env_m)
        loc[c] = self.tr_dst[t]
        entered[c] = now
        busy[c] = now + dwell
        self._apply_actions(t, &crng[c], variables, env_m)
        self._emit_peripherals(t, c, now, &crng[c], full, per_counts,
                               r_ptime, r_pdev, r_pevent)
        if full:
            _grow_push(r_etime, now)
            _grow_push(r_ecomp, c)
            _grow_push(r_elabel, self.tr_label[t])
        sched_tr[t] = C_NAN
        return self._reschedule(c, now, loc, busy, variables, sched_tr, sched_inter,
                                h_time, h_kind, h_key, heap_size, heap_cap)

    cdef Py_ssize_t _fire_interaction(self, int i, double now, bint full,
                                      int32_t *loc, double *busy, double *entered,
                                      double *variables, uint64_t *crng, double env_m,
                                      double *sched_tr, double *sched_inter,
                                      double **h_time, int32_t **h_kind, int32_t **h_key,
                                      Py_ssize_t heap_size, Py_ssize_t *heap_cap,
                                      double *mode_total, double *mode_work, long *per_counts,
                                      GrowBuf *r_idev, GrowBuf *r_imode,
                                      GrowBuf *r_istart, GrowBuf *r_idur,
                                      GrowBuf *r_etime, GrowBuf *r_ecomp, GrowBuf *r_elabel,
                                      GrowBuf *r_ptime, GrowBuf *r_pdev, GrowBuf *r_pevent) except -1:
        cdef int s = self.inter_part_start[i]
        cdef int count = self.inter_part_count[i]
        cdef int k, c, a, j
        cdef int comps[16]
        cdef int arcs[16]
        cdef bint preserve[16]
        cdef double dwell = 0.0
        cdef double d
        for k in range(count):
            c = self.ip_comp[s + k]
            a = self.ip_arc[self.ip_arc_offset[s + k] + loc[c]]
            comps[k] = c
            arcs[k] = a
            d = self._draw_duration(a, &crng[c], now, env_m)
            if d > dwell:
                dwell = d
        for k in range(count):
            c = comps[k]
            a = arcs[k]
            preserve[k] = (self.tr_src[a] == self.tr_dst[a]
                           and self.loc_class[self.loc_offset[c] + loc[c]] != LOC_HARD)
            if not preserve[k]:
                self._record_interval(c, now, full, loc, entered, mode_total, mode_work,
                                      r_idev, r_imode, r_istart, r_idur)
        j = self.inter_tf_start[i]
        for k in range(j, j + self.inter_tf_count[i]):
            variables[self.tf_dst_slot[k]] = variables[self.tf_src_slot[k]]
        for k in range(count):
            c = comps[k]
            a = arcs[k]
            if not preserve[k]:
                loc[c] = self.tr_dst[a]
                entered[c] = now
                busy[c] = now + dwell
            self._apply_actions(a, &crng[c], variables, env_m)
            self._emit_peripherals(a, c, now, &crng[c], full, per_counts,
                                   r_ptime, r_pdev, r_pevent)
            if full:
                _grow_push(r_etime, now)
                _grow_push(r_ecomp, c)
                _grow_push(r_elabel, self.tr_label[a])
        sched_inter[i] = C_NAN
        for k in range(count):
            heap_size = self._reschedule(comps[k], now, loc, busy, variables,
                                         sched_tr, sched_inter,
                                         h_time, h_kind, h_key, heap_size, heap_cap)
        return heap_size

    cdef object _snapshot(self, double t, int32_t *loc, double *busy, double *variables):
        p = self.program
        comps = {}
        for c in range(self.n_comp):
            upper = p.var_offset[c + 1] if c + 1 < self.n_comp else p.n_vars
            comps[p.comp_ids[c]] = {
                "location": p.loc_names[p.loc_offset[c] + loc[c]].split(":", 1)[1],
                "busy_until": busy[c],
                "variables": {
                    p.var_names[s].split(":", 1)[1]: variables[s]
                    for s in range(p.var_offset[c], upper)
                },
            }
        return {"time": t, "components": comps}
