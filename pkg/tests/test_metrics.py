import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binomtest

from skyconsensus import metrics
from skyconsensus.metrics import (
    BatchSummary,
    UndefinedMetric,
    clopper_pearson,
    convergence,
    decision_metric,
    signed_convergence,
    summarize,
)
from skyconsensus.protocol import State
from skyconsensus.simulator import RunResult, run_sync
from skyconsensus.trust_graph import generate_uniform


def fake_async(d0, d1, confused=0, undecided=0, max_rounds=40, seed=0):
    n = d0 + d1 + confused + undecided
    ops = np.array([0] * d0 + [1] * d1 + [0] * confused + [1] * undecided, dtype=np.int8)
    states = np.array(
        [State.DECIDED] * (d0 + d1) + [State.CONFUSED] * confused + [State.DECIDING] * undecided,
        dtype=np.int8,
    )
    return RunResult(
        mode="async", seed=seed, correct_ids=np.arange(n), initial_opinions=ops.copy(),
        opinions=ops, max_rounds=max_rounds, complete=undecided == 0, states=states,
    )


def fake_sync(rc, max_rounds=40, seed=0):
    ops = np.zeros(10, dtype=np.int8)
    return RunResult(
        mode="sync", seed=seed, correct_ids=np.arange(10), initial_opinions=ops, opinions=ops,
        max_rounds=max_rounds, complete=rc <= max_rounds, rounds_to_consensus=rc,
    )


def test_convergence_examples():
    assert convergence(500, 500) == 0
    assert convergence(1000, 0) == 1
    assert convergence(750, 250) == 0.5
    assert signed_convergence(250, 750) == -0.5
    assert signed_convergence(998, 0) == 1


def test_decision_examples():
    assert decision_metric(96, 4) == pytest.approx(0.92, abs=1e-15)
    assert decision_metric(50, 50) == 0
    assert decision_metric(100, 0) == 1


@pytest.mark.parametrize("fn", [convergence, signed_convergence, decision_metric])
def test_empty_population_undefined(fn):
    with pytest.raises(UndefinedMetric):
        fn(0, 0)


pairs = st.tuples(st.integers(0, 10**6), st.integers(0, 10**6)).filter(lambda p: sum(p) > 0)


@given(pairs)
def test_signed_magnitude_and_range(p):
    c0, c1 = p
    s = signed_convergence(c0, c1)
    assert abs(s) == convergence(c0, c1)
    assert -1 <= s <= 1 and 0 <= decision_metric(c0, c1) <= 1
    if c0 >= c1:
        assert s == convergence(c0, c1)


@given(pairs)
def test_decision_label_symmetry(p):
    assert decision_metric(*p) == decision_metric(p[1], p[0])


def test_confused_excluded_from_decision():
    r = fake_async(96, 4, confused=50)
    assert r.decision == pytest.approx(0.92)
    assert r.correct_decision_fraction == 0.96
    s = summarize([r])
    assert s.confused == 50 and s.pooled_correct_fraction()[0] == 0.96


def test_single_run_one_bin():
    s = summarize([fake_sync(7)])
    assert sum(1 for c in s.hist if c) == 1
    assert s.histogram_mass == 1 and s.hist[3] == 1  # bin [7, 9)


def test_bin_edges_and_sentinel():
    s = summarize([fake_sync(r) for r in (1, 2, 3, 4, 39, 40, 41)])
    assert s.bin_edges[:3] == [1, 3, 5]
    assert s.hist[0] == 2 and s.hist[1] == 2 and s.hist[19] == 2
    assert s.failures == 1 and s.sentinel == 41
    assert s.histogram_mass == s.runs == 7


def test_mixed_complete_incomplete():
    runs = [fake_async(90, 10), fake_async(30, 0, undecided=70), fake_async(100, 0)]
    s = summarize(runs)
    assert s.incomplete == 1 and s.incomplete_fraction == pytest.approx(1 / 3)
    mean, _ = s.decision_mean()
    assert mean == pytest.approx((0.8 + 1.0) / 2)
    assert s.failures == 1 and s.histogram_mass == 3
    assert s.d0 == 190


def test_ci_normal_approximation():
    runs = [fake_async(96, 4), fake_async(98, 2), fake_async(90, 10)]
    mean, (lo, hi) = summarize(runs).decision_mean()
    vals = np.array([0.92, 0.96, 0.8])
    half = 1.959963984540054 * vals.std(ddof=1) / np.sqrt(3)
    assert mean == pytest.approx(vals.mean())
    assert (lo, hi) == pytest.approx((vals.mean() - half, vals.mean() + half))


def test_clopper_pearson_matches_scipy():
    for k, n in [(0, 10), (3, 10), (10, 10), (960, 1000), (1, 2)]:
        ci = binomtest(k, n).proportion_ci(0.95, method="exact")
        assert clopper_pearson(k, n) == pytest.approx((ci.low, ci.high), abs=1e-12)
    s = summarize([fake_async(9, 1)])
    p, (lo, hi) = s.pooled_correct_fraction(exact=True)
    assert p == 0.9 and lo < 0.9 < hi


run_lists = st.lists(
    st.one_of(
        st.builds(fake_async, st.integers(0, 30), st.integers(0, 30), st.integers(0, 5), st.integers(0, 3)).filter(
            lambda r: r.n_correct > 0
        ),
        st.builds(fake_sync, st.integers(1, 41)),
    ),
    min_size=1,
    max_size=12,
)


def comparable(s):
    d = s.to_json()
    # float sums are order dependent only in the last bits
    for k in ("decision", "correct_fraction"):
        d[k]["mean"] = None if d[k]["mean"] is None else round(d[k]["mean"], 9)
        d[k]["ci95"] = [None if x is None else round(x, 9) for x in d[k]["ci95"]]
    return d


@given(run_lists, run_lists, run_lists)
def test_merge_associative_and_matches_whole(a, b, c):
    sa, sb, sc = summarize(a), summarize(b), summarize(c)
    left, right = (sa + sb) + sc, sa + (sb + sc)
    whole = summarize(a + b + c)
    assert comparable(left) == comparable(right) == comparable(whole)
    assert whole.histogram_mass == whole.runs == len(a + b + c)


def test_merge_rejects_mismatch():
    with pytest.raises(ValueError):
        BatchSummary(40) + BatchSummary(20)
    with pytest.raises(ValueError):
        summarize([])


def test_sync_sky_no_sentinel_mass():
    g = generate_uniform(300, 30, 1)
    s = summarize([run_sync(g, "sky", seed=k) for k in range(20)])
    assert s.failures == 0 and s.histogram_mass == 20


def test_json_and_csv_text():
    s = summarize([fake_sync(3), fake_async(9, 1)])
    doc = json.loads(metrics.json_text(s.to_json()))
    assert doc["histogram"]["bin_width"] == 2
    text = metrics.csv_text(["a", "b"], [[1, 0.5], [None, "x"]], meta={"seed": 3})
    assert text == "# seed=3\na,b\n1,0.5\n,x\n"
