"""Reference discrete-event loop driving :class:`protocol.NodeRuntime` objects.

Same inputs, outputs and random streams as the compiled ``_engine_c``; the two
must agree bit-for-bit.  Event ordering is ``(time, sequence number)``.
"""

import heapq
import math
from fractions import Fraction

import numpy as np

from .._random import TAG_ADVERSARY, NodeStream, keyed_latency, keyed_unit
from ..opinion_models import MODELS, apply_rule
from ..protocol import Message, NodeRuntime, ProtocolConfig, State
from .common import ADVERSARY_KINDS, adversary_emit

DELIVER, TIMEOUT, TICK = 0, 1, 2


def run_events(f_ptr, f_idx, r_ptr, r_idx, r_slot, faulty, init_op, p):
    n = len(faulty)
    seed = p["seed"]
    kind = ADVERSARY_KINDS[p["adv_kind"]]
    model = MODELS[p["model"]]
    ratio = p["sky_ratio"]
    mu, sigma, cutoff = p["mu"], p["sigma"], p["cutoff"]
    timeout, tick_ms, horizon = p["timeout_ms"], p["tick_ms"], p["horizon_ms"]
    cfg = ProtocolConfig(p["max_rounds"], Fraction(p["t_num"], p["t_den"]), timeout, model, ratio)
    trace = [] if p["trace"] else None
    inverted = kind == "inverted"

    f_ptr, f_idx, r_ptr, r_idx = (np.asarray(a).tolist() for a in (f_ptr, f_idx, r_ptr, r_idx))
    faulty = [bool(x) for x in faulty]

    nodes = [None] * n
    for u in range(n):
        if not faulty[u]:
            nodes[u] = NodeRuntime(u, f_idx[f_ptr[u] : f_ptr[u + 1]], int(init_op[u]), cfg, NodeStream(seed, u), 0.0, trace)

    heap = []
    seq = 0
    bcount = [0] * n
    tgen = [0] * n
    shadow = [-1] * n
    seen = [dict() for _ in range(n)] if inverted else None
    streams = {}
    events = stale = 0
    undecided = sum(1 for u in range(n) if not faulty[u])

    def push(t, kind_, node, payload):
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind_, node, payload))
        seq += 1

    def live_recipient(w):
        return inverted if faulty[w] else nodes[w].state == State.DECIDING

    def broadcast(u, msg, t):
        k = bcount[u]
        bcount[u] += 1
        for i in range(r_ptr[u], r_ptr[u + 1]):
            w = r_idx[i]
            if live_recipient(w):
                push(t + keyed_latency(seed, u, w, k, mu, sigma, cutoff), DELIVER, w, msg)

    def tick(v, k, t):
        followers = r_idx[r_ptr[v] : r_ptr[v + 1]]
        sh = None
        if inverted:
            stream = streams.setdefault(v, NodeStream(seed, v))
            if shadow[v] < 0:
                shadow[v] = 0 if stream.random() < 0.5 else 1
            own_seen = seen[v]
            ops = [own_seen[f] for f in f_idx[f_ptr[v] : f_ptr[v + 1]] if f in own_seen]
            shadow[v] = sh = apply_rule(model, shadow[v], ops, stream, ratio)
        coin = _Coin(keyed_unit(seed, TAG_ADVERSARY, v, k, 0))
        out = adversary_emit(kind, v, k, followers, coin, sh)
        b = bcount[v]
        bcount[v] += 1
        for w, msg in out:
            if live_recipient(w):
                push(t + keyed_latency(seed, v, w, b, mu, sigma, cutoff), DELIVER, w, msg)

    def emitted(u, msgs, t):
        nonlocal undecided
        for m in msgs:
            broadcast(u, m, t)
        node = nodes[u]
        if node.state != State.DECIDING:
            undecided -= 1
        else:
            tgen[u] += 1
            push(t + timeout, TIMEOUT, u, tgen[u])

    for u in range(n):
        if not faulty[u]:
            broadcast(u, nodes[u].initial_message(), 0.0)
            push(timeout, TIMEOUT, u, 0)
        elif kind not in ("none", "silent") and (inverted or any(not faulty[w] for w in r_idx[r_ptr[u] : r_ptr[u + 1]])):
            push(0.0, TICK, u, 1)

    end_time = 0.0
    hit_horizon = False
    while heap and undecided > 0:
        t, _, ev, u, payload = heapq.heappop(heap)
        if t > horizon:
            hit_horizon = True
            break
        events += 1
        end_time = t
        if ev == DELIVER:
            if faulty[u]:
                seen[u][payload.sender] = payload.opinion
                continue
            node = nodes[u]
            if node.state != State.DECIDING:
                continue
            if not (payload.round >= node.round or payload.final):
                stale += 1
                continue
            msgs = node.handle_message(payload, t)
            if msgs:
                emitted(u, msgs, t)
        elif ev == TIMEOUT:
            node = nodes[u]
            if node.state != State.DECIDING or payload != tgen[u]:
                continue
            msgs = node.on_timeout(t)
            if msgs:
                emitted(u, msgs, t)
            else:
                push(t + timeout, TIMEOUT, u, payload)
        else:
            tick(u, payload, t)
            push(payload * tick_ms, TICK, u, payload + 1)

    correct = [u for u in range(n) if not faulty[u]]
    opinion = np.full(n, -1, dtype=np.int8)
    state = np.full(n, -1, dtype=np.int8)
    rnd = np.zeros(n, dtype=np.int32)
    decided_at = np.full(n, math.nan)
    for u in correct:
        node = nodes[u]
        opinion[u] = node.opinion
        state[u] = int(node.state)
        rnd[u] = node.round
        if node.decided_at is not None:
            decided_at[u] = node.decided_at
    out = {
        "opinion": opinion,
        "state": state,
        "round": rnd,
        "decided_at": decided_at,
        "end_time": horizon if hit_horizon else end_time,
        "complete": undecided == 0,
        "events": events,
        "suspicions": sum(nodes[u].suspicions for u in correct),
        "degenerate": sum(nodes[u].degenerate_rounds for u in correct),
        "stale": stale,
        "violations": sum(nodes[u].violations for u in correct),
        "trace": None,
    }
    if trace is not None:
        out["trace"] = {
            "time": np.array([r[0] for r in trace], dtype=np.float64),
            "node": np.array([r[1] for r in trace], dtype=np.int64),
            "round": np.array([r[3] for r in trace], dtype=np.int32),
            "opinion": np.array([r[4] for r in trace], dtype=np.int8),
            "state": np.array([r[5] for r in trace], dtype=np.int8),
        }
    return out


class _Coin:
    __slots__ = ("u",)

    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u
