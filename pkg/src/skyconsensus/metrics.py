"""Scalar run metrics and batch aggregation.

``BatchSummary`` keeps only additive sufficient statistics, so summaries built
on separate workers merge associatively with ``+``.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

Z95 = 1.959963984540054


class UndefinedMetric(ValueError):
    pass


def convergence(c0_count, c1_count):
    total = c0_count + c1_count
    if total < 1:
        raise UndefinedMetric("convergence of an empty population")
    return abs(c0_count - c1_count) / total


def signed_convergence(c0_count, c1_count):
    total = c0_count + c1_count
    if total < 1:
        raise UndefinedMetric("convergence of an empty population")
    return (c0_count - c1_count) / total


def decision_metric(d0, d1):
    """``|d0 - d1| / (d0 + d1)`` over decided correct nodes; confused nodes
    are not counted."""
    if d0 + d1 < 1:
        raise UndefinedMetric("no decided nodes")
    return abs(d0 - d1) / (d0 + d1)


def _mean_ci(n, s, ss):
    if n == 0:
        return None, (None, None)
    mean = s / n
    if n == 1:
        return mean, (mean, mean)
    var = max(ss - n * mean * mean, 0.0) / (n - 1)
    half = Z95 * math.sqrt(var / n)
    return mean, (mean - half, mean + half)


def clopper_pearson(k, n, level=0.95):
    from scipy.stats import beta

    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass
class BatchSummary:
    max_rounds: int
    runs: int = 0
    hist: list = field(default_factory=list)
    failures: int = 0
    incomplete: int = 0
    cvg: list = field(default_factory=list)
    dec_n: int = 0
    dec_sum: float = 0.0
    dec_sumsq: float = 0.0
    cf_n: int = 0
    cf_sum: float = 0.0
    cf_sumsq: float = 0.0
    d0: int = 0
    d1: int = 0
    confused: int = 0

    @property
    def bin_edges(self):
        """Left edges 1, 3, 5, ... of the width-2 bins."""
        return [1 + 2 * i for i in range(len(self.hist))]

    @property
    def sentinel(self):
        return self.max_rounds + 1

    @property
    def histogram_mass(self):
        return sum(self.hist) + self.failures

    def decision_mean(self):
        return _mean_ci(self.dec_n, self.dec_sum, self.dec_sumsq)

    def correct_fraction(self):
        """Per-run share of decided correct nodes choosing 0: mean and normal CI."""
        return _mean_ci(self.cf_n, self.cf_sum, self.cf_sumsq)

    def pooled_correct_fraction(self, exact=False):
        n = self.d0 + self.d1
        if n == 0:
            return None, (None, None)
        p = self.d0 / n
        if exact:
            return p, clopper_pearson(self.d0, n)
        half = Z95 * math.sqrt(p * (1 - p) / n)
        return p, (max(0.0, p - half), min(1.0, p + half))

    @property
    def incomplete_fraction(self):
        return self.incomplete / self.runs if self.runs else 0.0

    def __add__(self, other):
        if self.max_rounds != other.max_rounds:
            raise ValueError("cannot merge summaries with different max_rounds")
        width = max(len(self.hist), len(other.hist))
        pad = lambda h: list(h) + [0] * (width - len(h))  # noqa: E731
        return BatchSummary(
            self.max_rounds,
            self.runs + other.runs,
            [a + b for a, b in zip(pad(self.hist), pad(other.hist))],
            self.failures + other.failures,
            self.incomplete + other.incomplete,
            sorted(self.cvg + other.cvg),
            self.dec_n + other.dec_n,
            self.dec_sum + other.dec_sum,
            self.dec_sumsq + other.dec_sumsq,
            self.cf_n + other.cf_n,
            self.cf_sum + other.cf_sum,
            self.cf_sumsq + other.cf_sumsq,
            self.d0 + other.d0,
            self.d1 + other.d1,
            self.confused + other.confused,
        )

    def to_json(self):
        dec, dec_ci = self.decision_mean()
        cf, cf_ci = self.correct_fraction()
        pooled, pooled_ci = self.pooled_correct_fraction()
        return {
            "runs": self.runs,
            "max_rounds": self.max_rounds,
            "histogram": {"bin_width": 2, "left_edges": self.bin_edges, "counts": list(self.hist)},
            "failures": self.failures,
            "incomplete": self.incomplete,
            "incomplete_fraction": self.incomplete_fraction,
            "convergence": {
                "mean": float(np.mean(self.cvg)) if self.cvg else None,
                "quantiles": {
                    str(q): float(np.quantile(self.cvg, q)) for q in (0.05, 0.5, 0.95)
                }
                if self.cvg
                else {},
            },
            "decision": {"mean": dec, "ci95": list(dec_ci), "runs": self.dec_n},
            "correct_fraction": {"mean": cf, "ci95": list(cf_ci), "runs": self.cf_n},
            "pooled": {"d0": self.d0, "d1": self.d1, "confused": self.confused, "correct_fraction": pooled, "ci95": list(pooled_ci)},
        }


def summarize(results):
    """Aggregate runs.  Incomplete asynchronous runs count towards the
    histogram (in the failure bin) and ``incomplete`` but are left out of
    the decision averages."""
    if not results:
        raise ValueError("nothing to summarize")
    max_rounds = results[0].max_rounds
    out = BatchSummary(max_rounds)
    for r in results:
        if r.max_rounds != max_rounds:
            raise ValueError("runs use different max_rounds")
        out.runs += 1
        rc = r.consensus_round
        if rc is None or rc > max_rounds:
            out.failures += 1
        else:
            b = (rc - 1) // 2
            if b >= len(out.hist):
                out.hist.extend([0] * (b + 1 - len(out.hist)))
            out.hist[b] += 1
        out.cvg.append(r.final_cvg)
        if not r.complete:
            out.incomplete += 1
            continue
        if r.states is None:
            continue
        out.d0 += r.d0
        out.d1 += r.d1
        out.confused += r.confused
        dec = r.decision
        if dec is not None:
            out.dec_n += 1
            out.dec_sum += dec
            out.dec_sumsq += dec * dec
            cf = r.correct_decision_fraction
            out.cf_n += 1
            out.cf_sum += cf
            out.cf_sumsq += cf * cf
    out.cvg.sort()
    return out


def signed_cvg_series(result, step_ms=1000.0):
    """``(time_ms, signed convergence)`` of correct opinions sampled every
    ``step_ms`` from a traced asynchronous run."""
    if result.trace is None:
        raise ValueError("run was not traced")
    index = {int(u): i for i, u in enumerate(result.correct_ids.tolist())}
    ops = result.initial_opinions.astype(np.int64).copy()
    t, node, op = result.trace["time"], result.trace["node"], result.trace["opinion"]
    order = np.argsort(t, kind="stable")
    horizon = float(t.max()) if t.size else 0.0
    times = np.arange(0.0, horizon + step_ms, step_ms)
    out = []
    j = 0
    for ts in times:
        while j < order.size and t[order[j]] <= ts:
            k = order[j]
            ops[index[int(node[k])]] = op[k]
            j += 1
        ones = int(ops.sum())
        out.append(signed_convergence(ops.size - ones, ones))
    return times, np.array(out)


def csv_text(header, rows, meta=None):
    """CSV with optional leading ``# key=value`` comment lines."""
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return x


def json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
