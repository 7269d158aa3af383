"""Mean-field dynamics of the correct-opinion-0 density ``c0``.

Densities: ``c0, c1`` for correct nodes holding 0/1, ``f0, f1, fs`` for faulty
nodes broadcasting 0, broadcasting 1, or staying silent.  Receivers only see
broadcasting nodes, so the opinion mix a node samples from is::

    a0 = (c0 + f0) / (1 - fs),   a1 = (c1 + f1) / (1 - fs)

and the rate is ``dc0/dt = c1*s1 - c0*s0`` with ``s1`` (``s0``) the probability
that a node holding 1 (0) flips.  One protocol round corresponds to ``dt = 1``.

Binomial terms need an integer number of trials; a fractional mean degree is
rounded to the nearest integer ``N`` (or floored, via ``degree_rounding``), and
every index such as ``D/2 - 1`` or ``0.2*D`` is then evaluated on ``N`` with
``F(x) = F(floor(x))`` and ``d(x) = 0`` for non-integer ``x``.
"""

import functools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DENSITY_TOL = 1e-12
RATE_EPS = 1e-9
DEFAULT_T_MAX = 200.0
DEFAULT_EPSILON = 0.05
DEFAULT_RESOLUTION = 1e-4
MEAN_FIELD_MODELS = ("mr", "sa", "sky")


# -- binomial ---------------------------------------------------------------


@lru_cache(maxsize=1024)
@functools.lru_cache(maxsize=512)
def _comb_tables(n):
    exact = [math.comb(n, k) for k in range(n + 1)]
    as_float = np.array([float(c) for c in exact])
    logs = np.array([math.log(c) for c in exact])
    as_float.setflags(write=False)
    logs.setflags(write=False)
    return as_float, logs


def binom_pmf_all(n, p):
    """pmf of Binomial(n, p) at k = 0..n.

    Direct ``C(n,k) p^k q^(n-k)`` wherever neither power underflows (exact for
    dyadic ``p``), log space elsewhere.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    out = np.zeros(n + 1)
    if p == 0.0:
        out[0] = 1.0
        return out
    if p == 1.0:
        out[n] = 1.0
        return out
    comb, logcomb = _comb_tables(n)
    k = np.arange(n + 1)
    lp, lq = k * math.log(p), (n - k) * math.log1p(-p)
    safe = (lp > -700.0) & (lq > -700.0)
    with np.errstate(under="ignore"):
        direct = comb * np.power(p, k) * np.power(1.0 - p, n - k)
        return np.where(safe, direct, np.exp(logcomb + lp + lq))


def binom(k, n, p):
    """``(pmf, cdf)`` of Binomial(n, p) at ``k``."""
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    pmf = binom_pmf_all(n, p)
    return float(pmf[k]), min(1.0, float(pmf[: k + 1].sum()))


def _cdf_at(pmf, x):
    k = math.floor(x)
    if k < 0:
        return 0.0
    return float(pmf[: k + 1].sum())


def _pmf_at(pmf, x):
    if x != int(x) or not 0 <= x < len(pmf):
        return 0.0
    return float(pmf[int(x)])


def trials(D, degree_rounding="nearest"):
    if degree_rounding == "nearest":
        return int(math.floor(D + 0.5))
    if degree_rounding == "floor":
        return int(math.floor(D))
    raise ValueError(f"unknown degree_rounding {degree_rounding!r}")


# -- flip probabilities ------------------------------------------------------


def _s_mr(N, pmf):
    return _cdf_at(pmf, N / 2 - 1) + 0.5 * _pmf_at(pmf, N / 2)


def _s_sa(N, pmf):
    lo, hi = math.ceil(0.2 * N), math.floor(0.8 * N)
    # (N-i)/N + 1/(2N) == (2(N-i)+1) / (2N); divide once at the end
    weights = 2 * (N - np.arange(lo, hi + 1)) + 1
    return _cdf_at(pmf, 0.2 * N) + float(np.dot(pmf[lo : hi + 1], weights)) / (2 * N)


def flip_mr(D, a0, a1, degree_rounding="nearest"):
    """``(s0, s1)`` under majority rule:
    ``s1 = F(D/2 - 1; D, a1) + d(D/2; D, a1) / 2``."""
    N = trials(D, degree_rounding)
    if N < 2:
        raise ValueError(f"majority-rule flip needs D >= 2, got {D}")
    return _s_mr(N, binom_pmf_all(N, a0)), _s_mr(N, binom_pmf_all(N, a1))


def flip_sa(D, a0, a1, degree_rounding="nearest"):
    """``(s0, s1)`` under the annealing rule:
    ``s1 = F(0.2D; D, a1) + sum_{i=0.2D}^{0.8D} d(i; D, a1) ((D-i)/D + 1/(2D))``.

    The term ``i = 0.2D`` is counted in both parts when ``0.2D`` is an
    integer, exactly as written, so ``s`` can exceed 1 for small ``a``.
    """
    N = trials(D, degree_rounding)
    if N < 5:
        raise ValueError(f"annealing flip needs D >= 5, got {D}")
    return _s_sa(N, binom_pmf_all(N, a0)), _s_sa(N, binom_pmf_all(N, a1))


def _s_exact(N, a, model, ratio):
    # node holds x; k of N followees hold x too; flips when the other side wins
    pmf = binom_pmf_all(N, a)
    k = np.arange(N + 1)
    same, other = k + 1, N - k
    mr = np.where(other > same, 1.0, np.where(other == same, 0.5, 0.0))
    sa = np.where(other > 4 * same, 1.0, np.where(same > 4 * other, 0.0, other / (N + 1)))
    if model == "mr":
        w = mr
    elif model == "sa":
        w = sa
    else:
        w = ratio * mr + (1 - ratio) * sa
    return float(np.dot(pmf, w))


def flip_exact(D, a0, a1, model="sky", ratio=0.5, degree_rounding="nearest"):
    """Flip probabilities of the microscopic rule itself, counting the node's
    own opinion among ``N + 1`` votes.  Alternative to the closed forms used
    by :func:`flip_mr`/:func:`flip_sa`; select with ``kernel="exact"``."""
    N = trials(D, degree_rounding)
    return _s_exact(N, a0, model, ratio), _s_exact(N, a1, model, ratio)


# -- states and adversaries --------------------------------------------------


@dataclass(frozen=True)
class MeanFieldState:
    c0: float
    c1: float
    f0: float = 0.0
    f1: float = 0.0
    fs: float = 0.0
    D: float = 10.0

    def __post_init__(self):
        dens = (self.c0, self.c1, self.f0, self.f1, self.fs)
        if min(dens) < 0:
            raise ValueError(f"negative density in {self}")
        if abs(sum(dens) - 1.0) > DENSITY_TOL:
            raise ValueError(f"densities sum to {sum(dens)!r}, not 1")
        if not self.D > 0:
            raise ValueError("mean degree must be positive")

    @property
    def f(self):
        return self.f0 + self.f1 + self.fs

    @classmethod
    def correct(cls, c0, D):
        return cls(c0=c0, c1=1.0 - c0, D=D)


@dataclass(frozen=True)
class EffectiveDensities:
    a0: float
    a1: float


class DegeneratePopulation(ValueError):
    pass


def effective_densities(state):
    if state.fs >= 1.0:
        raise DegeneratePopulation("every node is silent")
    denom = 1.0 - state.fs
    a0 = (state.c0 + state.f0) / denom
    return EffectiveDensities(a0, 1.0 - a0)


def apply_population_event(state, event):
    """``"faulty-leave"``: every faulty node disappears and correct densities
    renormalise.  ``"correct-join-0"``: as many correct 0-holders as there are
    already join, then everything renormalises."""
    if event == "faulty-leave":
        f = state.f
        if f >= 1.0:
            raise DegeneratePopulation("no correct nodes remain")
        if f == 0.0:
            return state
        c0 = state.c0 / (1.0 - f)
        return MeanFieldState(c0=c0, c1=1.0 - c0, D=state.D)
    if event == "correct-join-0":
        scale = 1.0 + state.c0
        c0 = 2.0 * state.c0 / scale
        c1, f0, f1, fs = (x / scale for x in (state.c1, state.f0, state.f1, state.fs))
        return MeanFieldState(c0, c1, f0, f1, fs, state.D)
    raise ValueError(f"unknown population event {event!r}")


# Each mapping splits a faulty density f into (f0, f1, fs).
ADVERSARIES = {
    "always-1": lambda c0, c1, f: (0.0, f, 0.0),
    "always-0": lambda c0, c1, f: (f, 0.0, 0.0),
    "split": lambda c0, c1, f: (f / 2, f / 2, 0.0),
    # fair coins average out to the split mix
    "random": lambda c0, c1, f: (f / 2, f / 2, 0.0),
    "silent": lambda c0, c1, f: (0.0, 0.0, f),
    # faulty nodes hold opinions distributed like correct ones and say the opposite
    "inverted": lambda c0, c1, f: (f * c1 / (c0 + c1), f * c0 / (c0 + c1), 0.0)
    if c0 + c1 > 0
    else (f / 2, f / 2, 0.0),
}


def adversary_densities(name, c0, c1, f):
    """Effective densities a receiver sees under a named faulty behaviour."""
    try:
        f0, f1, fs = ADVERSARIES[name](c0, c1, f)
    except KeyError:
        raise ValueError(f"unknown adversary {name!r}; choose from {sorted(ADVERSARIES)}") from None
    if fs >= 1.0:
        raise DegeneratePopulation("every node is silent")
    a0 = (c0 + f0) / (1.0 - fs)
    return EffectiveDensities(a0, 1.0 - a0)


# -- rates and trajectories --------------------------------------------------


def flip_probabilities(model, D, a0, a1, kernel="printed", ratio=0.5, degree_rounding="nearest"):
    if kernel == "exact":
        return flip_exact(D, a0, a1, model, ratio, degree_rounding)
    if kernel != "printed":
        raise ValueError(f"unknown kernel {kernel!r}")
    if model == "mr":
        return flip_mr(D, a0, a1, degree_rounding)
    if model == "sa":
        return flip_sa(D, a0, a1, degree_rounding)
    if model == "sky":
        N = trials(D, degree_rounding)
        if N < 5:
            raise ValueError(f"annealing flip needs D >= 5, got {D}")
        out = []
        for a in (a0, a1):
            pmf = binom_pmf_all(N, a)
            out.append(ratio * _s_mr(N, pmf) + (1 - ratio) * _s_sa(N, pmf))
        return tuple(out)
    raise ValueError(f"mean-field model must be one of {MEAN_FIELD_MODELS}, got {model!r}")


def rate(c0, c1, a0, a1, D, model="sky", **kw):
    """``dc0/dt`` from raw densities."""
    s0, s1 = flip_probabilities(model, D, a0, a1, **kw)
    return c1 * s1 - c0 * s0


def dc0_dt(state, model="sky", eff=None, **kw):
    if eff is None:
        eff = effective_densities(state)
    return rate(state.c0, state.c1, eff.a0, eff.a1, state.D, model, **kw)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    c0: np.ndarray
    dt: float
    f: float = 0.0
    converged: bool = False

    @property
    def final_c0(self):
        return float(self.c0[-1])

    @property
    def final_share(self):
        """Limiting ``c0 / (1 - f)``."""
        return self.final_c0 / (1.0 - self.f)

    def steps_to(self, level):
        """First step index with ``c0 >= level``, or None."""
        hit = np.flatnonzero(self.c0 >= level)
        return int(hit[0]) if hit.size else None


def integrate(state0, model="sky", adversary="always-1", dt=1.0, t_max=DEFAULT_T_MAX, **kw):
    """Forward Euler on ``c0`` with ``c0 + c1 = 1 - f`` held fixed.

    ``adversary`` is a name from :data:`ADVERSARIES` or a callable
    ``(c0, c1, f) -> EffectiveDensities``.  Stops at ``t_max`` or once
    ``|dc0/dt| < 1e-9``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    f = state0.f
    mapping = adversary if callable(adversary) else (lambda a, b, ff: adversary_densities(adversary, a, b, ff))
    c0 = state0.c0
    ceiling = 1.0 - f
    ts, cs = [0.0], [c0]
    t, converged = 0.0, False
    n_steps = int(math.floor(t_max / dt + 1e-9))
    for step in range(1, n_steps + 1):
        c1 = max(ceiling - c0, 0.0)
        eff = mapping(c0, c1, f)
        r = rate(c0, c1, eff.a0, eff.a1, state0.D, model, **kw)
        if abs(r) < RATE_EPS:
            converged = True
            break
        c0 = min(max(c0 + r * dt, 0.0), ceiling)
        t = step * dt
        ts.append(t)
        cs.append(c0)
    return Trajectory(np.array(ts), np.array(cs), dt, f, converged)


# -- critical points and fixed points ----------------------------------------


@dataclass(frozen=True)
class CriticalPoint:
    p: float
    D: float
    f_critical: float
    epsilon: float


def tolerates(p, D, f, epsilon=DEFAULT_EPSILON, model="sky", t_max=DEFAULT_T_MAX, **kw):
    """Whether a fraction ``f`` of always-1 faulty nodes, drawn uniformly from
    a population with 0-share ``p``, leaves the limiting correct 0-share at or
    above ``1 - epsilon``."""
    if f >= 1.0:
        return False
    c0, c1 = p * (1.0 - f), (1.0 - p) * (1.0 - f)
    state = MeanFieldState(c0, c1, 0.0, f, 0.0, D) if f > 0 else MeanFieldState(c0, 1.0 - c0, D=D)
    traj = integrate(state, model, "always-1", 1.0, t_max, **kw)
    return traj.final_share >= 1.0 - epsilon


def critical_point(p, D, epsilon=DEFAULT_EPSILON, model="sky", resolution=DEFAULT_RESOLUTION, **kw):
    """Largest tolerable always-1 faulty density, by bisection on ``f``.

    Always-1 is the weakest point (every other faulty mix yields a larger
    ``a0``, and the rate grows with ``a0``), so this is a lower bound for any
    adversary.
    """
    if not 0.5 <= p <= 1.0:
        raise ValueError("p must lie in [0.5, 1]")
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    lo, hi = 0.0, 1.0
    if not tolerates(p, D, 0.0, epsilon, model, **kw):
        return CriticalPoint(p, D, 0.0, epsilon)
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if tolerates(p, D, mid, epsilon, model, **kw):
            lo = mid
        else:
            hi = mid
    return CriticalPoint(p, D, lo, epsilon)


def _rate_curve(f, D, model, **kw):
    def g(c0):
        c1 = max(1.0 - f - c0, 0.0)
        eff = adversary_densities("always-1", c0, c1, f)
        return rate(c0, c1, eff.a0, eff.a1, D, model, **kw)

    return g


def fixed_points(f, D, model="sky", step=1e-3, xtol=1e-8, **kw):
    """Roots of ``dc0/dt`` over ``c0`` in ``[0, 1 - f]`` under the always-1
    adversary: grid scan for sign changes, each refined by bisection."""
    if not 0.0 <= f < 1.0:
        raise ValueError("f must lie in [0, 1)")
    g = _rate_curve(f, D, model, **kw)
    top = 1.0 - f
    m = int(math.floor(top / step + 1e-9))
    xs = [i * step for i in range(m + 1)]
    if xs[-1] < top:
        xs.append(top)
    vs = [g(x) for x in xs]
    roots = []
    for i, (x, v) in enumerate(zip(xs, vs)):
        if abs(v) <= 1e-12:
            roots.append(x)
        elif i + 1 < len(xs) and abs(vs[i + 1]) > 1e-12 and (v > 0) != (vs[i + 1] > 0):
            lo, hi, vlo = x, xs[i + 1], v
            while hi - lo > xtol:
                mid = 0.5 * (lo + hi)
                vm = g(mid)
                if (vm > 0) == (vlo > 0):
                    lo, vlo = mid, vm
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    merged = []
    for r in sorted(roots):
        if not merged or r - merged[-1] > 10 * xtol:
            merged.append(r)
    return merged
