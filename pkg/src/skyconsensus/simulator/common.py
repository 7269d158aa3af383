import math
from dataclasses import dataclass, field

import numpy as np

from .. import metrics
from .._random import gaussian_from_units
from ..protocol import Message, State
from ..trust_graph import random_selection, top_influential

ADVERSARY_KINDS = ("none", "always-1", "always-0", "silent", "random", "split", "inverted")
ADVERSARY_CODES = {k: i for i, k in enumerate(ADVERSARY_KINDS)}


@dataclass(frozen=True)
class LatencyModel:
    mu: float = 500.0
    sigma: float = 500.0
    lower_cutoff: float = 50.0

    def __post_init__(self):
        if self.lower_cutoff <= 0 or self.sigma < 0:
            raise ValueError(f"invalid latency model {self}")


def latency_from_units(m, u1, u2):
    x = m.mu + m.sigma * gaussian_from_units(u1, u2)
    return m.lower_cutoff if x < m.lower_cutoff else x


def sample_latency(m, rng):
    """Gaussian delay clamped below at ``lower_cutoff``; no upper bound."""
    return latency_from_units(m, 1.0 - rng.random(), rng.random())


@dataclass(frozen=True)
class AdversaryStrategy:
    kind: str = "none"
    fraction: float = 0.0
    selection: str = "random"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}; expected one of {ADVERSARY_KINDS}")
        if self.selection not in ("random", "top"):
            raise ValueError(f"unknown selection {self.selection!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")

    @property
    def code(self):
        return ADVERSARY_CODES[self.kind]

    def select(self, g, run_seed):
        if self.kind == "none" or self.fraction == 0.0:
            return frozenset()
        if self.selection == "top":
            return top_influential(g, self.fraction)
        seed = self.seed if self.seed is not None else [run_seed, 7]
        return random_selection(g, self.fraction, seed)


def adversary_emit(strategy, node, tick, followers, rng=None, shadow=None):
    """Messages a faulty node sends at one tick, as ``(recipient, Message)``.

    ``random`` needs ``rng`` (one draw, shared by all recipients); ``inverted``
    needs ``shadow``, the opinion the correct rule would have produced.
    """
    kind = strategy.kind if isinstance(strategy, AdversaryStrategy) else strategy
    if kind in ("none", "silent"):
        return []
    if kind == "split":
        return [(w, Message(node, tick, 1 if i % 2 == 0 else 0)) for i, w in enumerate(followers)]
    if kind == "always-1":
        op = 1
    elif kind == "always-0":
        op = 0
    elif kind == "random":
        op = 0 if rng.random() < 0.5 else 1
    elif kind == "inverted":
        if shadow is None:
            raise ValueError("inverted adversary needs the shadow opinion")
        op = 1 - shadow
    else:
        raise ValueError(f"unknown adversary kind {kind!r}")
    return [(w, Message(node, tick, op)) for w in followers]


@dataclass(frozen=True)
class InitialConfiguration:
    """Either a target signed convergence over correct nodes, or an explicit
    ``{node: opinion}`` assignment."""

    target_cvg: float | None = 0.0
    assignment: dict | None = None

    def assign(self, correct_ids, seed):
        correct_ids = np.asarray(sorted(correct_ids), dtype=np.int64)
        if self.assignment is not None:
            return {int(u): int(self.assignment[int(u)]) for u in correct_ids}
        m = len(correct_ids)
        c = self.target_cvg
        if not -1.0 <= c <= 1.0:
            raise ValueError("target convergence must lie in [-1, 1]")
        zeros = min(m, int(math.floor(m * (1.0 + c) / 2.0 + 0.5)))
        order = np.random.default_rng([seed, 1]).permutation(correct_ids)
        ops = {int(u): 1 for u in correct_ids}
        for u in order[:zeros].tolist():
            ops[u] = 0
        return ops


@dataclass
class RunResult:
    mode: str
    seed: int
    correct_ids: np.ndarray
    initial_opinions: np.ndarray
    opinions: np.ndarray
    max_rounds: int
    complete: bool
    states: np.ndarray | None = None
    rounds: np.ndarray | None = None
    decided_at: np.ndarray | None = None
    rounds_to_consensus: int | None = None
    end_time_ms: float | None = None
    stats: dict = field(default_factory=dict)
    trace: dict | None = None

    @property
    def n_correct(self):
        return int(self.correct_ids.size)

    @property
    def c0(self):
        return int((self.opinions == 0).sum())

    @property
    def c1(self):
        return int((self.opinions == 1).sum())

    def _decided(self, op):
        if self.states is None:
            return 0
        return int(((self.states == State.DECIDED) & (self.opinions == op)).sum())

    @property
    def d0(self):
        return self._decided(0)

    @property
    def d1(self):
        return self._decided(1)

    @property
    def confused(self):
        if self.states is None:
            return 0
        return int((self.states == State.CONFUSED).sum())

    @property
    def undecided(self):
        if self.states is None:
            return 0
        return int((self.states == State.DECIDING).sum())

    @property
    def init_cvg(self):
        ops = self.initial_opinions
        return metrics.signed_convergence(int((ops == 0).sum()), int((ops == 1).sum()))

    @property
    def final_cvg(self):
        return metrics.convergence(self.c0, self.c1)

    @property
    def final_cvg_signed(self):
        return metrics.signed_convergence(self.c0, self.c1)

    @property
    def decision(self):
        if self.d0 + self.d1 == 0:
            return None
        return metrics.decision_metric(self.d0, self.d1)

    @property
    def correct_decision_fraction(self):
        """Share of decided correct nodes that settled on 0."""
        d = self.d0 + self.d1
        return self.d0 / d if d else None

    def rounds_histogram(self):
        if self.rounds is None:
            return {}
        vals, counts = np.unique(self.rounds, return_counts=True)
        return dict(zip(vals.tolist(), counts.tolist()))

    def decided_within(self, time_ms):
        """Fraction of correct nodes whose final decision came by ``time_ms``."""
        if self.decided_at is None:
            return None
        ok = (self.states != State.DECIDING) & (self.decided_at <= time_ms)
        return float(ok.sum()) / self.n_correct

    @property
    def consensus_round(self):
        """Round used for histograms: the consensus round in synchronous mode;
        in asynchronous mode ``max_rounds`` if every correct node finished,
        else the ``max_rounds + 1`` failure sentinel."""
        if self.mode == "sync":
            return self.rounds_to_consensus
        return self.max_rounds if self.complete else self.max_rounds + 1
