"""Synchronous round engine: every node updates at once from the previous
round's opinions.  No message filter, no failure detector, no faults."""

import numpy as np
import scipy.sparse as sp

from ..opinion_models import MODELS, SKY_RATIO
from .common import InitialConfiguration, RunResult


def _mr(n0, n1, u):
    return np.where(n0 > n1, 0, np.where(n1 > n0, 1, (u >= 0.5).astype(np.int8)))


def _sa(n0, n1, u):
    p0 = n0 / (n0 + n1)
    return np.where(n0 > 4 * n1, 0, np.where(n1 > 4 * n0, 1, (u >= p0).astype(np.int8)))


def run_sync(g, model, init=None, max_rounds=40, seed=0, sky_ratio=SKY_RATIO):
    """One synchronous run.

    The consensus check happens at the start of each round, so a population
    that starts unanimous reports round 1; a run still mixed after
    ``max_rounds`` updates reports ``max_rounds + 1``.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    init = init or InitialConfiguration(0.0)
    deg = g.followee_counts()
    need = 2 if model == "sznajd" else 1
    if g.n == 0 or deg.min() < need:
        raise ValueError(f"{model} needs every node to follow at least {need} node(s)")

    ids = np.arange(g.n)
    start = init.assign(ids, seed)
    x = np.array([start[u] for u in range(g.n)], dtype=np.int8)
    x0 = x.copy()
    rng = np.random.default_rng([seed, 2])
    adj = sp.csr_matrix(
        (np.ones(g.edge_count, dtype=np.int64), g.followee_idx, g.followee_ptr), shape=(g.n, g.n)
    )
    ptr = np.asarray(g.followee_ptr[:-1])
    total = deg + 1
    history = []
    consensus = max_rounds + 1
    for r in range(1, max_rounds + 1):
        ones = int(x.sum())
        history.append((g.n - 2 * ones) / g.n)
        if ones == 0 or ones == g.n:
            consensus = r
            break
        if model in ("mr", "sa", "sky"):
            n1 = adj @ x.astype(np.int64) + x
            n0 = total - n1
            if model == "mr":
                x = _mr(n0, n1, rng.random(g.n))
            elif model == "sa":
                x = _sa(n0, n1, rng.random(g.n))
            else:
                pick, u_mr, u_sa = rng.random(g.n), rng.random(g.n), rng.random(g.n)
                x = np.where(pick < sky_ratio, _mr(n0, n1, u_mr), _sa(n0, n1, u_sa))
        elif model == "voter":
            k = (rng.random(g.n) * deg).astype(np.int64)
            x = x[g.followee_idx[ptr + k]]
        else:
            i = (rng.random(g.n) * deg).astype(np.int64)
            j = (rng.random(g.n) * (deg - 1)).astype(np.int64)
            j += j >= i
            a, b = x[g.followee_idx[ptr + i]], x[g.followee_idx[ptr + j]]
            x = np.where(a == b, a, x)
        x = x.astype(np.int8)

    return RunResult(
        mode="sync",
        seed=seed,
        correct_ids=ids,
        initial_opinions=x0,
        opinions=x,
        max_rounds=max_rounds,
        complete=consensus <= max_rounds,
        rounds_to_consensus=consensus,
        stats={"signed_cvg_by_round": history},
    )
