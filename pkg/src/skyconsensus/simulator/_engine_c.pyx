# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled discrete-event loop.  Mirrors ``_engine_py.run_events`` exactly:
same event order, same keyed random draws, same floating-point operations."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, log, sqrt, NAN
from libc.stdint cimport int8_t, int32_t, int64_t, uint8_t, uint64_t
from libcpp.vector cimport vector

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef uint64_t TAG_LATENCY_A = 1
cdef uint64_t TAG_LATENCY_B = 2
cdef uint64_t TAG_RULE = 3
cdef uint64_t TAG_ADVERSARY = 4

# adversary codes, see common.ADVERSARY_KINDS
cdef enum:
    ADV_NONE = 0
    ADV_ONE = 1
    ADV_ZERO = 2
    ADV_SILENT = 3
    ADV_RANDOM = 4
    ADV_SPLIT = 5
    ADV_INVERTED = 6

# model codes, see opinion_models.MODELS
cdef enum:
    M_SKY = 0
    M_MR = 1
    M_SA = 2
    M_VOTER = 3
    M_SZNAJD = 4

cdef enum:
    DELIVER = 0
    TIMEOUT = 1
    TICK = 2

cdef enum:
    DECIDING = 0
    DECIDED = 1
    CONFUSED = 2


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double keyed_unit(uint64_t seed, uint64_t tag, uint64_t a, uint64_t b, uint64_t c) nogil:
    cdef uint64_t h = mix64(seed ^ (tag * GOLDEN))
    h = mix64(h + a * GOLDEN)
    h = mix64(h + b * GOLDEN)
    h = mix64(h + c * GOLDEN)
    return <double>(h >> 11) * INV_2_53


cdef struct Ev:
    double t
    int64_t seq
    int32_t kind
    int32_t node
    int64_t a      # sender / timeout generation / tick index
    int32_t rnd
    int32_t slot
    int8_t op
    int8_t st


cdef inline bint ev_less(Ev* x, Ev* y) nogil:
    if x.t < y.t:
        return True
    if x.t > y.t:
        return False
    return x.seq < y.seq


cdef class _Sim:
    cdef:
        int64_t n
        const int64_t[::1] f_ptr, f_idx, r_ptr, r_idx, r_slot
        const uint8_t[::1] faulty
        uint64_t seed
        int adv, model, max_rounds
        int64_t t_num, t_den
        double ratio, timeout, mu, sigma, cutoff, tick_ms, horizon
        bint inverted, tracing
        vector[Ev] heap
        int64_t seq
        # per node
        int8_t[::1] opinion, state
        int32_t[::1] rnd
        double[::1] decided_at
        int64_t[::1] bcount, tgen, ctr, suspicions, degenerate
        int8_t[::1] shadow
        # per followee slot
        uint8_t[::1] has, final_, suspect, seen_has
        int32_t[::1] b_round
        int8_t[::1] b_op, seen_op
        double[::1] last_valid
        int64_t undecided, stale
        int32_t[::1] scratch
        vector[double] tr_time
        vector[int64_t] tr_node
        vector[int32_t] tr_round
        vector[int8_t] tr_op, tr_st

    cdef void push(self, Ev e):
        e.seq = self.seq
        self.seq += 1
        self.heap.push_back(e)
        cdef Py_ssize_t i = self.heap.size() - 1, p
        cdef Ev tmp
        while i > 0:
            p = (i - 1) >> 1
            if ev_less(&self.heap[i], &self.heap[p]):
                tmp = self.heap[i]
                self.heap[i] = self.heap[p]
                self.heap[p] = tmp
                i = p
            else:
                break

    cdef Ev pop(self):
        cdef Ev top = self.heap[0], tmp
        cdef Py_ssize_t size = self.heap.size() - 1, i = 0, l, r, m
        self.heap[0] = self.heap[size]
        self.heap.pop_back()
        while True:
            l = 2 * i + 1
            r = l + 1
            m = i
            if l < size and ev_less(&self.heap[l], &self.heap[m]):
                m = l
            if r < size and ev_less(&self.heap[r], &self.heap[m]):
                m = r
            if m == i:
                break
            tmp = self.heap[i]
            self.heap[i] = self.heap[m]
            self.heap[m] = tmp
            i = m
        return top

    cdef double latency(self, int64_t s, int64_t w, int64_t k):
        cdef double u1 = 1.0 - keyed_unit(self.seed, TAG_LATENCY_A, s, w, k)
        cdef double u2 = keyed_unit(self.seed, TAG_LATENCY_B, s, w, k)
        cdef double x = self.mu + self.sigma * (sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2))
        return self.cutoff if x < self.cutoff else x

    cdef inline bint live_recipient(self, int64_t w):
        if self.faulty[w]:
            return self.inverted
        return self.state[w] == DECIDING

    cdef double draw(self, int64_t u):
        cdef double x = keyed_unit(self.seed, TAG_RULE, u, self.ctr[u], 0)
        self.ctr[u] += 1
        return x

    cdef void send(self, int64_t u, double t, int32_t rnd, int8_t op, int8_t st, int split):
        # split: -1 for a uniform message, else split-half by follower index
        cdef int64_t k = self.bcount[u]
        cdef int64_t i, w
        cdef Ev e
        self.bcount[u] += 1
        for i in range(self.r_ptr[u], self.r_ptr[u + 1]):
            w = self.r_idx[i]
            if not self.live_recipient(w):
                continue
            e.t = t + self.latency(u, w, k)
            e.kind = DELIVER
            e.node = <int32_t>w
            e.a = u
            e.rnd = rnd
            e.slot = <int32_t>self.r_slot[i]
            if split >= 0:
                e.op = 1 if (i - self.r_ptr[u]) % 2 == 0 else 0
            else:
                e.op = op
            e.st = st
            self.push(e)

    cdef int rule(self, int64_t u, int own, int m, int ones):
        # ``scratch[:m]`` holds live followee opinions in static order
        cdef int n0, n1, i, j, a, b
        cdef double x
        if self.model == M_VOTER:
            if m == 0:
                return own
            return self.scratch[<int>(self.draw(u) * m)]
        if self.model == M_SZNAJD:
            if m < 2:
                return own
            i = <int>(self.draw(u) * m)
            j = <int>(self.draw(u) * (m - 1))
            if j >= i:
                j += 1
            a = self.scratch[i]
            b = self.scratch[j]
            return a if a == b else own
        n1 = own + ones
        n0 = m + 1 - n1
        if self.model == M_MR or (self.model == M_SKY and self.draw(u) < self.ratio):
            if n0 > n1:
                return 0
            if n1 > n0:
                return 1
            return 0 if self.draw(u) < 0.5 else 1
        if n0 > 4 * n1:
            return 0
        if n1 > 4 * n0:
            return 1
        x = <double>n0 / <double>(n0 + n1)
        return 0 if self.draw(u) < x else 1

    cdef bint ready(self, int64_t u):
        cdef int64_t s
        for s in range(self.f_ptr[u], self.f_ptr[u + 1]):
            if not self.suspect[s] and not self.has[s]:
                return False
        return True

    cdef bint try_apply(self, int64_t u, double now):
        cdef bint fired = False
        cdef int m, ones
        cdef int64_t s, lo = self.f_ptr[u], hi = self.f_ptr[u + 1], n0, n1, total
        while self.state[u] == DECIDING and self.ready(u):
            m = 0
            ones = 0
            for s in range(lo, hi):
                if not self.suspect[s]:
                    self.scratch[m] = self.b_op[s]
                    ones += self.b_op[s]
                    m += 1
            if m == 0:
                self.degenerate[u] += 1
            if self.rnd[u] >= self.max_rounds:
                n1 = self.opinion[u] + ones
                n0 = m + 1 - n1
                total = (n0 + n1) * self.t_num
                if n0 * self.t_den > total:
                    self.state[u] = DECIDED
                    self.opinion[u] = 0
                elif n1 * self.t_den > total:
                    self.state[u] = DECIDED
                    self.opinion[u] = 1
                else:
                    self.state[u] = CONFUSED
                self.decided_at[u] = now
            else:
                self.opinion[u] = <int8_t>self.rule(u, self.opinion[u], m, ones)
                self.rnd[u] += 1
                for s in range(lo, hi):
                    if self.has[s] and not self.final_[s] and self.b_round[s] < self.rnd[u]:
                        self.has[s] = 0
            if self.tracing:
                self.tr_time.push_back(now)
                self.tr_node.push_back(u)
                self.tr_round.push_back(self.rnd[u])
                self.tr_op.push_back(self.opinion[u])
                self.tr_st.push_back(self.state[u])
            self.send(u, now, self.rnd[u], self.opinion[u], self.state[u], -1)
            fired = True
            if m == 0:
                break
        return fired

    cdef void emitted(self, int64_t u, double t):
        cdef Ev e
        if self.state[u] != DECIDING:
            self.undecided -= 1
        else:
            self.tgen[u] += 1
            e.t = t + self.timeout
            e.kind = TIMEOUT
            e.node = <int32_t>u
            e.a = self.tgen[u]
            self.push(e)

    cdef void tick(self, int64_t v, int64_t k, double t):
        cdef int op = 0, m, ones, sh
        cdef int64_t s
        if self.adv == ADV_SPLIT:
            self.send(v, t, <int32_t>k, 0, DECIDING, 1)
            return
        if self.adv == ADV_ONE:
            op = 1
        elif self.adv == ADV_ZERO:
            op = 0
        elif self.adv == ADV_RANDOM:
            op = 0 if keyed_unit(self.seed, TAG_ADVERSARY, v, k, 0) < 0.5 else 1
        elif self.adv == ADV_INVERTED:
            if self.shadow[v] < 0:
                self.shadow[v] = 0 if self.draw(v) < 0.5 else 1
            m = 0
            ones = 0
            for s in range(self.f_ptr[v], self.f_ptr[v + 1]):
                if self.seen_has[s]:
                    self.scratch[m] = self.seen_op[s]
                    ones += self.seen_op[s]
                    m += 1
            sh = self.rule(v, self.shadow[v], m, ones)
            self.shadow[v] = <int8_t>sh
            op = 1 - sh
        self.send(v, t, <int32_t>k, <int8_t>op, DECIDING, -1)

    cdef void on_deliver(self, Ev* e, double t):
        cdef int64_t u = e.node, s = self.f_ptr[u] + e.slot
        cdef bint final = e.st != DECIDING
        if self.faulty[u]:
            self.seen_has[s] = 1
            self.seen_op[s] = e.op
            return
        if self.state[u] != DECIDING:
            return
        if not (e.rnd >= self.rnd[u] or final):
            self.stale += 1
            return
        if not self.has[s] or (not self.final_[s] and (final or e.rnd > self.b_round[s])):
            self.has[s] = 1
            self.final_[s] = final
            self.b_round[s] = e.rnd
            self.b_op[s] = e.op
        self.last_valid[s] = t
        self.suspect[s] = 0
        if self.try_apply(u, t):
            self.emitted(u, t)

    cdef bint on_timeout(self, int64_t u, double t):
        cdef int64_t s
        for s in range(self.f_ptr[u], self.f_ptr[u + 1]):
            if self.suspect[s] or self.has[s]:
                continue
            if t - self.last_valid[s] >= self.timeout:
                self.suspect[s] = 1
                self.suspicions[u] += 1
        return self.try_apply(u, t)


def run_events(f_ptr, f_idx, r_ptr, r_idx, r_slot, faulty, init_op, p):
    cdef _Sim sim = _Sim()
    cdef int64_t n = len(faulty), E = len(f_idx), u, i, w, events = 0, maxdeg = 0
    cdef bint hit_horizon = False, any_correct
    cdef double end_time = 0.0
    cdef Ev e, ev
    cdef const int8_t[::1] init = np.ascontiguousarray(init_op, dtype=np.int8)

    sim.n = n
    sim.f_ptr = np.ascontiguousarray(f_ptr, dtype=np.int64)
    sim.f_idx = np.ascontiguousarray(f_idx, dtype=np.int64)
    sim.r_ptr = np.ascontiguousarray(r_ptr, dtype=np.int64)
    sim.r_idx = np.ascontiguousarray(r_idx, dtype=np.int64)
    sim.r_slot = np.ascontiguousarray(r_slot, dtype=np.int64)
    sim.faulty = np.ascontiguousarray(faulty, dtype=np.uint8)
    sim.seed = <uint64_t>int(p["seed"])
    sim.adv = p["adv_kind"]
    sim.model = p["model"]
    sim.ratio = p["sky_ratio"]
    sim.max_rounds = p["max_rounds"]
    sim.t_num = p["t_num"]
    sim.t_den = p["t_den"]
    sim.timeout = p["timeout_ms"]
    sim.mu = p["mu"]
    sim.sigma = p["sigma"]
    sim.cutoff = p["cutoff"]
    sim.tick_ms = p["tick_ms"]
    sim.horizon = p["horizon_ms"]
    sim.tracing = p["trace"]
    sim.inverted = sim.adv == ADV_INVERTED
    sim.seq = 0

    sim.opinion = np.full(n, -1, dtype=np.int8)
    sim.state = np.full(n, -1, dtype=np.int8)
    sim.rnd = np.zeros(n, dtype=np.int32)
    sim.decided_at = np.full(n, np.nan)
    sim.bcount = np.zeros(n, dtype=np.int64)
    sim.tgen = np.zeros(n, dtype=np.int64)
    sim.ctr = np.zeros(n, dtype=np.int64)
    sim.suspicions = np.zeros(n, dtype=np.int64)
    sim.degenerate = np.zeros(n, dtype=np.int64)
    sim.shadow = np.full(n, -1, dtype=np.int8)
    sim.has = np.zeros(E, dtype=np.uint8)
    sim.final_ = np.zeros(E, dtype=np.uint8)
    sim.suspect = np.zeros(E, dtype=np.uint8)
    sim.seen_has = np.zeros(E, dtype=np.uint8)
    sim.b_round = np.zeros(E, dtype=np.int32)
    sim.b_op = np.zeros(E, dtype=np.int8)
    sim.seen_op = np.zeros(E, dtype=np.int8)
    sim.last_valid = np.zeros(E, dtype=np.float64)
    for u in range(n):
        maxdeg = max(maxdeg, sim.f_ptr[u + 1] - sim.f_ptr[u])
    sim.scratch = np.zeros(maxdeg + 1, dtype=np.int32)
    sim.undecided = 0
    sim.stale = 0
    for u in range(n):
        if not sim.faulty[u]:
            sim.opinion[u] = init[u]
            sim.state[u] = DECIDING
            sim.rnd[u] = 1
            sim.undecided += 1

    for u in range(n):
        if not sim.faulty[u]:
            sim.send(u, 0.0, 1, sim.opinion[u], DECIDING, -1)
            e.t = sim.timeout
            e.kind = TIMEOUT
            e.node = <int32_t>u
            e.a = 0
            sim.push(e)
        elif sim.adv != ADV_NONE and sim.adv != ADV_SILENT:
            any_correct = sim.inverted
            if not any_correct:
                for i in range(sim.r_ptr[u], sim.r_ptr[u + 1]):
                    if not sim.faulty[sim.r_idx[i]]:
                        any_correct = True
                        break
            if any_correct:
                e.t = 0.0
                e.kind = TICK
                e.node = <int32_t>u
                e.a = 1
                sim.push(e)

    while sim.heap.size() > 0 and sim.undecided > 0:
        ev = sim.pop()
        if ev.t > sim.horizon:
            hit_horizon = True
            break
        events += 1
        end_time = ev.t
        u = ev.node
        if ev.kind == DELIVER:
            sim.on_deliver(&ev, ev.t)
        elif ev.kind == TIMEOUT:
            if sim.state[u] != DECIDING or ev.a != sim.tgen[u]:
                continue
            if sim.on_timeout(u, ev.t):
                sim.emitted(u, ev.t)
            else:
                e.t = ev.t + sim.timeout
                e.kind = TIMEOUT
                e.node = ev.node
                e.a = ev.a
                sim.push(e)
        else:
            sim.tick(u, ev.a, ev.t)
            e.t = ev.a * sim.tick_ms
            e.kind = TICK
            e.node = ev.node
            e.a = ev.a + 1
            sim.push(e)

    correct = np.asarray(sim.faulty) == 0
    out = {
        "opinion": np.asarray(sim.opinion).copy(),
        "state": np.asarray(sim.state).copy(),
        "round": np.where(correct, np.asarray(sim.rnd), 0).astype(np.int32),
        "decided_at": np.asarray(sim.decided_at).copy(),
        "end_time": sim.horizon if hit_horizon else end_time,
        "complete": sim.undecided == 0,
        "events": int(events),
        "suspicions": int(np.asarray(sim.suspicions)[correct].sum()),
        "degenerate": int(np.asarray(sim.degenerate)[correct].sum()),
        "stale": int(sim.stale),
        "violations": 0,
        "trace": None,
    }
    if sim.tracing:
        m = sim.tr_time.size()
        out["trace"] = {
            "time": np.array([sim.tr_time[i] for i in range(m)], dtype=np.float64),
            "node": np.array([sim.tr_node[i] for i in range(m)], dtype=np.int64),
            "round": np.array([sim.tr_round[i] for i in range(m)], dtype=np.int32),
            "opinion": np.array([sim.tr_op[i] for i in range(m)], dtype=np.int8),
            "state": np.array([sim.tr_st[i] for i in range(m)], dtype=np.int8),
        }
    return out
