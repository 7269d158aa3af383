"""Local update rules for binary opinions.

Counting rules (``mr``, ``sa``, ``sky``) look at ``(n0, n1)``: the number of
zeros and ones among the node's own opinion plus its followees' opinions.
Sampling rules (``voter``, ``sznajd``) only look at followee opinions.

Every ``rng`` argument is anything with a ``random()`` method returning a float
in [0, 1) -- ``random.Random``, ``numpy.random.Generator`` and
:class:`skyconsensus._random.NodeStream` all qualify.  The number of draws each
rule consumes is part of its contract (the compiled engine mirrors it):

* ``mr``: one draw on a tie, none otherwise
* ``sa``: one draw in the proportional branch, none otherwise
* ``sky``: one draw to pick the sub-rule, then that sub-rule's draws
* ``voter``: one draw; ``sznajd``: two draws
"""

import enum
from dataclasses import dataclass
from fractions import Fraction

MODELS = ("sky", "mr", "sa", "voter", "sznajd")
MODEL_CODES = {name: i for i, name in enumerate(MODELS)}
SKY_RATIO = 0.5


class RuleInapplicable(ValueError):
    """Raised when a sampling rule has too few followees to act on."""


class Decision(enum.Enum):
    DECIDED0 = "decided0"
    DECIDED1 = "decided1"
    CONFUSED = "confused"


@dataclass(frozen=True)
class OpinionCounts:
    n0: int
    n1: int

    def __post_init__(self):
        if self.n0 < 0 or self.n1 < 0:
            raise ValueError(f"negative opinion count: {self}")

    @property
    def total(self):
        return self.n0 + self.n1

    @classmethod
    def of(cls, opinions):
        ones = sum(1 for v in opinions if v)
        return cls(len(opinions) - ones, ones)


def _unpack(c):
    n0, n1 = (c.n0, c.n1) if isinstance(c, OpinionCounts) else c
    if n0 + n1 < 1:
        raise ValueError("rule applied to an empty population")
    return n0, n1


def mr_rule(c, rng):
    """Majority of self plus followees; fair coin on a tie."""
    n0, n1 = _unpack(c)
    if n0 > n1:
        return 0
    if n1 > n0:
        return 1
    return 0 if rng.random() < 0.5 else 1


def sa_rule(c, rng):
    """Stick with a 4:1 supermajority, otherwise pick 0 with probability
    ``n0 / (n0 + n1)``.  The boundary ``n0 == 4*n1`` is probabilistic."""
    n0, n1 = _unpack(c)
    if n0 > 4 * n1:
        return 0
    if n1 > 4 * n0:
        return 1
    return 0 if rng.random() < n0 / (n0 + n1) else 1


def sky_rule(c, rng, ratio=SKY_RATIO):
    if rng.random() < ratio:
        return mr_rule(c, rng)
    return sa_rule(c, rng)


def voter_rule(followee_opinions, rng):
    m = len(followee_opinions)
    if m == 0:
        raise RuleInapplicable("voter rule needs at least one followee")
    return followee_opinions[int(rng.random() * m)]


def sznajd_rule(current, followee_opinions, rng):
    """Two distinct followees drawn uniformly; adopt their opinion if they
    agree, otherwise keep ``current``."""
    m = len(followee_opinions)
    if m < 2:
        raise RuleInapplicable("sznajd rule needs at least two followees")
    i = int(rng.random() * m)
    j = int(rng.random() * (m - 1))
    if j >= i:
        j += 1
    a, b = followee_opinions[i], followee_opinions[j]
    return a if a == b else current


def apply_rule(model, own, followee_opinions, rng, ratio=SKY_RATIO):
    """Dispatch by model name.

    When a sampling rule cannot be applied (too few live followees) the node
    keeps its opinion, so degenerate neighbourhoods never stall a run.
    """
    if model in ("mr", "sa", "sky"):
        ones = own + sum(followee_opinions)
        counts = (len(followee_opinions) + 1 - ones, ones)
        if model == "mr":
            return mr_rule(counts, rng)
        if model == "sa":
            return sa_rule(counts, rng)
        return sky_rule(counts, rng, ratio)
    if model == "voter":
        return voter_rule(followee_opinions, rng) if followee_opinions else own
    if model == "sznajd":
        if len(followee_opinions) < 2:
            return own
        return sznajd_rule(own, followee_opinions, rng)
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def threshold_fraction(T):
    """Exact rational form of the decision threshold (2/3 stays 2/3)."""
    frac = Fraction(T).limit_denominator(1_000_000)
    if not Fraction(1, 2) < frac <= 1:
        raise ValueError(f"decision threshold must lie in (0.5, 1], got {T}")
    return frac


def final_decision(c, T=Fraction(2, 3)):
    n0, n1 = _unpack(c)
    frac = threshold_fraction(T)
    total = (n0 + n1) * frac.numerator
    if n0 * frac.denominator > total:
        return Decision.DECIDED0
    if n1 * frac.denominator > total:
        return Decision.DECIDED1
    return Decision.CONFUSED
