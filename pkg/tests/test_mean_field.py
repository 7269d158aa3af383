import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skyconsensus import mean_field as mf
from skyconsensus.simulator import InitialConfiguration, run_sync
from skyconsensus.trust_graph import generate_uniform


# -- exact rational oracle ---------------------------------------------------


def oracle_pmf(k, n, p):
    p = Fraction(p)
    return math.comb(n, k) * p**k * (1 - p) ** (n - k)


def oracle_cdf(k, n, p):
    return sum(oracle_pmf(i, n, p) for i in range(k + 1))


def close(x, exact, rel=1e-10):
    exact = float(exact)
    if exact < 1e-300:  # below the normal double range only absolute agreement is possible
        return abs(x - exact) < 1e-300
    return abs(x - exact) <= rel * exact


def test_binom_examples():
    assert mf.binom(1, 3, 0.5) == (0.375, 0.5)
    assert mf.binom(0, 10, 0.0) == (1.0, 1.0)
    _, cdf = mf.binom(200, 400, 0.5)
    assert cdf == pytest.approx(float(oracle_cdf(200, 400, 0.5)), abs=1e-12)
    assert cdf == pytest.approx(0.5199, abs=1e-4)


@pytest.mark.parametrize("k,n", [(-1, 3), (4, 3)])
def test_binom_range(k, n):
    with pytest.raises(ValueError):
        mf.binom(k, n, 0.5)


@given(st.integers(0, 60).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))),
       st.floats(0, 1))
def test_binom_vs_oracle_small(kn, p):
    k, n = kn
    pmf, cdf = mf.binom(k, n, p)
    assert close(pmf, oracle_pmf(k, n, p))
    assert close(cdf, oracle_cdf(k, n, p))


def test_flip_mr_examples():
    s0, s1 = mf.flip_mr(2, 0.5, 0.5)
    assert s1 == 0.5 and s0 == s1
    _, s1 = mf.flip_mr(10, 0.8, 0.2)
    want = oracle_cdf(4, 10, 0.2) + Fraction(1, 2) * oracle_pmf(5, 10, 0.2)
    assert s1 == pytest.approx(float(want), rel=1e-12)


def test_flip_mr_odd_degree_has_no_half_term():
    _, s1 = mf.flip_mr(5, 0.7, 0.3)
    assert s1 == pytest.approx(float(oracle_cdf(1, 5, 0.3)), rel=1e-12)


def test_flip_sa_examples():
    s0, s1 = mf.flip_sa(5, 0.5, 0.5)
    assert s1 == 0.75 and s0 == s1
    assert mf.flip_sa(5, 1.0, 0.0)[1] == 1.0


def test_flip_sa_term_by_term():
    # F(2;10,a) + sum_{i=2}^{8} d(i;10,a) (2(10-i)+1)/20
    a = 0.35
    want = oracle_cdf(2, 10, a) + sum(oracle_pmf(i, 10, a) * Fraction(2 * (10 - i) + 1, 20) for i in range(2, 9))
    assert mf.flip_sa(10, 1 - a, a)[1] == pytest.approx(float(want), rel=1e-12)


def test_flip_sa_can_exceed_one():
    # i = 0.2D enters both the cdf and the sum when 0.2D is an integer
    assert mf.flip_sa(10, 0.95, 0.05)[1] > 1.0


def test_flip_minimum_degree():
    with pytest.raises(ValueError):
        mf.flip_mr(1, 0.5, 0.5)
    with pytest.raises(ValueError):
        mf.flip_sa(4, 0.5, 0.5)


def test_fractional_degree_rounding():
    assert mf.trials(33.33) == 33
    assert mf.trials(33.5) == 34
    assert mf.trials(33.9, "floor") == 33
    assert mf.flip_mr(33.33, 0.6, 0.4) == mf.flip_mr(33, 0.6, 0.4)


@pytest.mark.parametrize("model", mf.MEAN_FIELD_MODELS)
@pytest.mark.parametrize("D", [5, 10, 33.33, 100])
def test_symmetric_point_is_fixed(model, D):
    assert mf.dc0_dt(mf.MeanFieldState.correct(0.5, D), model) == pytest.approx(0.0, abs=1e-15)


@given(st.floats(0, 1), st.floats(0, 0.5), st.sampled_from(mf.MEAN_FIELD_MODELS), st.sampled_from([5, 10, 40, 101]))
def test_rate_antisymmetry(x, f, model, D):
    c0 = x * (1 - f)
    c1 = 1 - f - c0
    a0 = c0 + f / 3
    a1 = 1 - a0
    r = mf.rate(c0, c1, a0, a1, D, model)
    assert r == pytest.approx(-mf.rate(c1, c0, a1, a0, D, model), abs=1e-12)


def _a0_sweeps(model, degrees):
    """Rate along a0 in [c0, c0 + f], the range faulty nodes can reach."""
    for D in degrees:
        for c0 in np.linspace(0.0, 0.9, 19):
            for f in (0.05, 0.1, 0.2, 0.3, 0.5):
                if c0 + f > 1:
                    continue
                a0s = np.linspace(c0, c0 + f, 20)
                yield D, c0, f, np.array([mf.rate(c0, 1 - f - c0, a, 1 - a, D, model) for a in a0s])


@pytest.mark.parametrize("model", ["sky", "sa"])
def test_rate_strictly_increasing_in_a0(model):
    n = 0
    for D, c0, f, rs in _a0_sweeps(model, (5, 10, 20, 50, 100)):
        assert (np.diff(rs) > 0).all(), (D, c0, f)
        n += rs.size
    assert n >= 1000


@pytest.mark.parametrize("model", mf.MEAN_FIELD_MODELS)
def test_rate_non_decreasing_in_a0_with_saturation(model):
    # once a flip probability rounds to exactly 0 or 1 the rate is flat up to
    # float noise; strictness is only asserted away from that
    for D, c0, f, rs in _a0_sweeps(model, (5, 10, 50, 100, 400)):
        d = np.diff(rs)
        assert (d > -1e-13).all(), (D, c0, f)
        live = (rs[:-1] > rs.min() + 1e-9) & (rs[1:] < rs.max() - 1e-9)
        assert (d[live] > 0).all(), (D, c0, f)


@given(st.floats(0, 1), st.floats(0, 0.99), st.floats(0, 1), st.floats(0, 1))
def test_density_conservation(x, f, y, z):
    c0 = x * (1 - f)
    f0, f1 = f * y * z, f * y * (1 - z)
    fs = f - f0 - f1
    c1 = 1 - c0 - f0 - f1 - fs
    if c1 < 0:
        return
    s = mf.MeanFieldState(c0, c1, f0, f1, fs, 10)
    eff = mf.effective_densities(s)
    assert eff.a0 + eff.a1 == pytest.approx(1.0, abs=1e-12)
    if fs == 0:
        assert s.c0 - 1e-12 <= eff.a0 <= s.c0 + f + 1e-12
    for ev in ("faulty-leave", "correct-join-0"):
        if ev == "faulty-leave" and s.f >= 1:
            continue
        t = mf.apply_population_event(s, ev)
        assert abs(t.c0 + t.c1 + t.f0 + t.f1 + t.fs - 1) <= 1e-12


def test_state_validation():
    with pytest.raises(ValueError):
        mf.MeanFieldState(0.5, 0.6)
    with pytest.raises(ValueError):
        mf.MeanFieldState(-0.1, 1.1)
    with pytest.raises(ValueError):
        mf.MeanFieldState(0.5, 0.5, D=0)


def test_effective_densities_examples():
    e = mf.effective_densities(mf.MeanFieldState(0.6, 0.4))
    assert (e.a0, e.a1) == (0.6, pytest.approx(0.4))
    e = mf.effective_densities(mf.MeanFieldState(0.5, 0.4, 0.0, 0.1, 0.0))
    assert e.a0 == 0.5 and e.a1 == pytest.approx(0.5)
    e = mf.adversary_densities("split", 0.5, 0.3, 0.2)
    assert e.a0 == pytest.approx(0.6)
    with pytest.raises(mf.DegeneratePopulation):
        mf.effective_densities(mf.MeanFieldState(0.0, 0.0, fs=1.0))


def test_silent_faults_renormalise():
    e = mf.adversary_densities("silent", 0.4, 0.4, 0.2)
    assert e.a0 == pytest.approx(0.5)


def test_population_events():
    s = mf.apply_population_event(mf.MeanFieldState(0.4, 0.4, 0.1, 0.1, 0.0), "faulty-leave")
    assert (s.c0, s.c1, s.f) == (pytest.approx(0.5), pytest.approx(0.5), 0.0)
    s = mf.apply_population_event(mf.MeanFieldState(0.5, 0.5), "correct-join-0")
    assert s.c0 == pytest.approx(2 / 3) and s.c1 == pytest.approx(1 / 3)
    base = mf.MeanFieldState(0.7, 0.3)
    assert mf.apply_population_event(base, "faulty-leave") == base
    with pytest.raises(mf.DegeneratePopulation):
        mf.apply_population_event(mf.MeanFieldState(0, 0, 0.5, 0.5, 0), "faulty-leave")
    with pytest.raises(ValueError):
        mf.apply_population_event(base, "bogus")


def test_trajectory_flat_at_half():
    tr = mf.integrate(mf.MeanFieldState.correct(0.5, 10))
    assert tr.converged and (tr.c0 == 0.5).all()


def test_trajectory_d5_speed():
    tr = mf.integrate(mf.MeanFieldState.correct(0.51, 5))
    assert tr.steps_to(0.99) <= 15
    assert (np.diff(tr.t) > 0).all()


def test_larger_degree_converges_faster():
    fast = mf.integrate(mf.MeanFieldState.correct(0.55, 100)).steps_to(0.99)
    slow = mf.integrate(mf.MeanFieldState.correct(0.55, 10)).steps_to(0.99)
    assert fast < slow


def test_trajectory_stays_in_range():
    s = mf.MeanFieldState(0.3, 0.5, 0.0, 0.2, 0.0, 10)
    tr = mf.integrate(s, "sa", dt=1.0, t_max=50)
    assert (tr.c0 >= 0).all() and (tr.c0 <= 0.8 + 1e-15).all()
    with pytest.raises(ValueError):
        mf.integrate(s, dt=0)


def test_integrate_accepts_callable_mapping():
    s = mf.MeanFieldState(0.6, 0.3, 0.0, 0.1, 0.0, 10)
    named = mf.integrate(s, adversary="always-1", t_max=20)
    custom = mf.integrate(s, adversary=lambda c0, c1, f: mf.EffectiveDensities(c0, 1 - c0), t_max=20)
    assert np.array_equal(named.c0, custom.c0)


def test_critical_point_examples():
    assert mf.critical_point(1.0, 10).f_critical > 0
    assert mf.critical_point(0.5, 10).f_critical < 0.005
    cp = mf.critical_point(0.75, 50)
    assert 0 <= cp.f_critical < 1 and cp.epsilon == 0.05
    with pytest.raises(ValueError):
        mf.critical_point(0.4, 10)
    with pytest.raises(ValueError):
        mf.critical_point(0.75, 10, epsilon=0.6)


def test_critical_point_is_boundary():
    cp = mf.critical_point(0.8, 50)
    assert mf.tolerates(0.8, 50, cp.f_critical)
    assert not mf.tolerates(0.8, 50, cp.f_critical + 2e-4)


def test_fixed_points_examples():
    roots = mf.fixed_points(0.0, 10)
    assert roots == [0.0, pytest.approx(0.5, abs=1e-7), 1.0]
    roots = mf.fixed_points(0.13, 50)
    assert len(roots) in (1, 3)
    assert roots[0] == 0.0
    high = mf.fixed_points(0.99, 10)
    assert len(high) == 1 and high[0] < 1e-6


def test_fixed_points_are_roots():
    for r in mf.fixed_points(0.13, 50):
        c1 = 0.87 - r
        e = mf.adversary_densities("always-1", r, c1, 0.13)
        assert abs(mf.rate(r, c1, e.a0, e.a1, 50)) < 1e-6


def test_exact_kernel_matches_brute_force_simulation():
    # one synchronous step on random 10-regular graphs of 20,000 nodes from c0 = 0.6
    deltas = []
    for gs in range(5):
        g = generate_uniform(20000, 10, 100 + gs)
        for s in range(10):
            r = run_sync(g, "mr", InitialConfiguration(0.2), max_rounds=1, seed=s)
            deltas.append((r.opinions == 0).mean() - (r.initial_opinions == 0).mean())
    sim = float(np.mean(deltas))
    exact = mf.rate(0.6, 0.4, 0.6, 0.4, 10, "mr", kernel="exact")
    printed = mf.rate(0.6, 0.4, 0.6, 0.4, 10, "mr")
    assert sim == pytest.approx(exact, abs=0.01)
    # the closed form adds a tie term d(D/2)/2 although D + 1 = 11 votes never tie
    tie = 0.5 * (0.4 * float(oracle_pmf(5, 10, 0.4)) - 0.6 * float(oracle_pmf(5, 10, 0.6)))
    assert printed - exact == pytest.approx(tie, abs=1e-12)
    assert printed == pytest.approx(sim + tie, abs=0.01)


def test_exact_kernel_direct_enumeration():
    # node holding 1 among N=4 followees, self-inclusive 5 votes, sa rule
    a = 0.3
    want = Fraction(0)
    for k in range(5):  # k followees also hold 1
        same, other = k + 1, 4 - k
        p = 1 if other > 4 * same else 0 if same > 4 * other else Fraction(other, 5)
        want += oracle_pmf(k, 4, a) * p
    assert mf.flip_exact(4, 0.7, 0.3, "sa")[1] == pytest.approx(float(want), rel=1e-12)


def test_unknown_names():
    with pytest.raises(ValueError):
        mf.flip_probabilities("voter", 10, 0.5, 0.5)
    with pytest.raises(ValueError):
        mf.flip_probabilities("sky", 10, 0.5, 0.5, kernel="other")
    with pytest.raises(ValueError):
        mf.adversary_densities("nope", 0.5, 0.5, 0.0)
