"""Asynchronous run driver and backend selection.

The compiled loop in ``_engine_c`` is used when it imports; otherwise, or when
``SKY_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
reference loop in ``_engine_py`` runs.  Both produce identical results.
"""

import logging
import os

import numpy as np

from .._random import MASK64
from ..opinion_models import MODEL_CODES
from ..protocol import ProtocolConfig
from . import _engine_py
from .common import AdversaryStrategy, InitialConfiguration, LatencyModel, RunResult

log = logging.getLogger(__name__)

try:
    from . import _engine_c
except ImportError:  # extension not built
    _engine_c = None

BACKENDS = ("python", "cython")


def _want_pure():
    return os.environ.get("SKY_PURE_PYTHON", "") not in ("", "0")


def default_backend():
    if _engine_c is None or _want_pure():
        return "python"
    return "cython"


def available_backends():
    return ("python", "cython") if _engine_c is not None else ("python",)


def _loop(backend):
    backend = backend or default_backend()
    if backend == "python":
        return _engine_py.run_events
    if backend == "cython":
        if _engine_c is None:
            raise RuntimeError("compiled engine not available; reinstall with Cython present")
        return _engine_c.run_events
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def follower_slots(g):
    """For every follower edge ``u -> w`` (in follower CSR order), the index
    of ``u`` inside ``w``'s followee list."""
    deg = np.diff(g.followee_ptr)
    src = np.repeat(np.arange(g.n, dtype=np.int64), deg)
    dst = np.asarray(g.followee_idx)
    pos = np.arange(dst.size, dtype=np.int64) - np.repeat(np.asarray(g.followee_ptr[:-1]), deg)
    order = np.lexsort((src, dst))
    return pos[order]


def run_async(
    g,
    cfg=None,
    adv=None,
    lat=None,
    init=None,
    seed=0,
    *,
    horizon_ms=300_000.0,
    tick_ms=1000.0,
    faulty=None,
    trace=False,
    backend=None,
):
    """One asynchronous run.

    ``faulty`` overrides ``adv.select`` with an explicit node set.  With
    ``trace=True`` the result carries every rule application as arrays
    ``time``, ``node``, ``round``, ``opinion``, ``state``.
    """
    cfg = cfg or ProtocolConfig()
    adv = adv or AdversaryStrategy()
    lat = lat or LatencyModel()
    init = init or InitialConfiguration(0.0)
    if horizon_ms <= 0 or tick_ms <= 0:
        raise ValueError("horizon_ms and tick_ms must be positive")

    bad = frozenset(int(u) for u in (adv.select(g, seed) if faulty is None else faulty))
    mask = np.zeros(g.n, dtype=np.uint8)
    if bad:
        mask[sorted(bad)] = 1
    correct = np.flatnonzero(mask == 0)
    start = init.assign(correct, seed)
    init_op = np.full(g.n, -1, dtype=np.int8)
    for u, op in start.items():
        init_op[u] = op

    params = {
        "adv_kind": adv.code if bad else 0,
        "model": MODEL_CODES[cfg.model],
        "sky_ratio": float(cfg.sky_ratio),
        "max_rounds": int(cfg.max_rounds),
        "t_num": cfg.T.numerator,
        "t_den": cfg.T.denominator,
        "timeout_ms": float(cfg.timeout_ms),
        "mu": float(lat.mu),
        "sigma": float(lat.sigma),
        "cutoff": float(lat.lower_cutoff),
        "tick_ms": float(tick_ms),
        "horizon_ms": float(horizon_ms),
        "seed": int(seed) & MASK64,
        "trace": bool(trace),
    }
    raw = _loop(backend)(
        np.ascontiguousarray(g.followee_ptr, dtype=np.int64),
        np.ascontiguousarray(g.followee_idx, dtype=np.int64),
        np.ascontiguousarray(g.follower_ptr, dtype=np.int64),
        np.ascontiguousarray(g.follower_idx, dtype=np.int64),
        follower_slots(g),
        mask,
        init_op,
        params,
    )
    if not raw["complete"]:
        log.info("seed %d: run incomplete at %.0f ms", seed, raw["end_time"])
    stats = {k: raw[k] for k in ("events", "suspicions", "degenerate", "stale", "violations")}
    stats["faulty"] = len(bad)
    return RunResult(
        mode="async",
        seed=seed,
        correct_ids=correct,
        initial_opinions=init_op[correct].copy(),
        opinions=raw["opinion"][correct].copy(),
        max_rounds=cfg.max_rounds,
        complete=bool(raw["complete"]),
        states=raw["state"][correct].copy(),
        rounds=raw["round"][correct].copy(),
        decided_at=raw["decided_at"][correct].copy(),
        end_time_ms=float(raw["end_time"]),
        stats=stats,
        trace=raw["trace"],
    )
