"""Compare the compiled and pure-Python async event loops.

    python3 benchmarks/bench_async.py --n 1000 --degree 30 --seeds 3

Each seed runs on both backends; results must match exactly or the script
exits non-zero.
"""

import argparse
import sys
import time

import numpy as np

from skyconsensus.simulator import AdversaryStrategy, InitialConfiguration, available_backends, run_async
from skyconsensus.trust_graph import generate_uniform


def _same(a, b):
    return (
        np.array_equal(a.opinions, b.opinions)
        and np.array_equal(a.states, b.states)
        and np.array_equal(a.decided_at, b.decided_at, equal_nan=True)
        and a.stats == b.stats
        and a.end_time_ms == b.end_time_ms
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--degree", type=int, default=30)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--fraction", type=float, default=0.13)
    args = ap.parse_args(argv)

    if "cython" not in available_backends():
        print("compiled backend not built; nothing to compare", file=sys.stderr)
        return 1
    g = generate_uniform(args.n, args.degree, 1)
    adv = AdversaryStrategy("always-1", args.fraction)
    init = InitialConfiguration(0.5)
    times = {"python": [], "cython": []}
    ok = True
    for seed in range(args.seeds):
        out = {}
        for backend in ("cython", "python"):
            t0 = time.perf_counter()
            out[backend] = run_async(g, adv=adv, init=init, seed=seed, backend=backend)
            times[backend].append(time.perf_counter() - t0)
        match = _same(out["python"], out["cython"])
        ok &= match
        print(
            f"seed {seed}: events={out['cython'].stats['events']} "
            f"python={times['python'][-1]:.2f}s cython={times['cython'][-1]:.3f}s match={match}"
        )
    py, cy = np.mean(times["python"]), np.mean(times["cython"])
    print(f"mean python {py:.2f}s  cython {cy:.3f}s  speedup {py / cy:.1f}x")
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
