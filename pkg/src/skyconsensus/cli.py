"""Command-line entry point.

    skyconsensus ingest wiki-Vote.txt --min-followees 10 --out graph.txt --stats stats.json
    skyconsensus gen-uniform --n 1000 --degree 30 --seed 1 --out u1000.txt
    skyconsensus meanfield critical --p 0.5:1:0.05 --D 10,20,50,100,200,400 --out crit.csv
    skyconsensus simulate --mode async --uniform 1000,30 --adversary always-1 --fraction 0.13 \
        --init-cvg 0.5 --seeds 0-19 --out-csv runs.csv --out-summary summary.json
    skyconsensus sweep --spec base.json --param fraction --values 0,0.05,0.1,0.13 --out sweep.csv

``simulate`` and ``sweep`` accept ``--spec FILE`` (flat JSON keys named like
the long flags, dashes or underscores); flags given on the command line win.
"""

import argparse
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import numpy as np

from . import __version__, mean_field, metrics
from .protocol import ProtocolConfig
from .simulator import (
    ADVERSARY_KINDS,
    AdversaryStrategy,
    InitialConfiguration,
    LatencyModel,
    run_async,
    run_sync,
)
from .trust_graph import (
    EdgeListParseError,
    GraphAnnihilated,
    enforce_min_followees,
    format_edge_list,
    generate_uniform,
    graph_stats,
    read_edge_list,
)

log = logging.getLogger("skyconsensus")

EXIT_USAGE = 2
EXIT_ANNIHILATED = 3
EXIT_RUN_ERROR = 4

# Defaults for run specs.  Keys double as long-flag names.
SPEC_DEFAULTS = {
    "mode": "async",
    "dataset": None,
    "uniform": None,
    "graph_seed": 1,
    "min_followees": 0,
    "model": "sky",
    "adversary": "none",
    "fraction": 0.0,
    "selection": "random",
    "adversary_seed": None,
    "init_cvg": 0.0,
    "mu": 500.0,
    "sigma": 500.0,
    "cutoff": 50.0,
    "timeout": 2000.0,
    "max_rounds": 40,
    "T": "2/3",
    "horizon": 300000.0,
    "tick": 1000.0,
    "seeds": "0",
    "deadline": 70000.0,
    "epsilon": 0.05,
}
# keys that do not influence data and stay out of the spec hash
NON_DATA_KEYS = {"out_csv", "out_summary", "out", "workers", "backend", "spec", "param", "values"}

RUN_HEADER = [
    "seed", "dataset", "model", "adversary", "f", "init_cvg", "final_cvg_signed", "decision",
    "d0", "d1", "confused", "rounds_p50", "rounds_max", "end_time_ms",
    "complete", "decided_by_deadline", "error",
]


class SpecError(ValueError):
    pass


# -- small parsers -----------------------------------------------------------


def parse_seeds(text):
    """``"0-19"``, ``"1,5,9"``, a mix of both, or a JSON list."""
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    if isinstance(text, int):
        return [text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            if hi < lo:
                raise SpecError(f"seeds: empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise SpecError("seeds: no seeds given")
    return out


def parse_floats(text):
    """Comma list, or ``start:stop:step`` with the stop included."""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    text = str(text)
    if ":" in text:
        a, b, s = (float(x) for x in text.split(":"))
        if s <= 0:
            raise SpecError(f"bad range {text!r}")
        n = int(math.floor((b - a) / s + 1e-9))
        return [round(a + i * s, 12) for i in range(n + 1)]
    return [float(x) for x in text.split(",") if x.strip()]


def spec_hash(spec):
    data = {k: v for k, v in spec.items() if k not in NON_DATA_KEYS}
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# -- graph loading -----------------------------------------------------------


def load_graph(spec):
    if spec.get("dataset") and spec.get("uniform"):
        raise SpecError("give either dataset or uniform, not both")
    if spec.get("dataset"):
        g = read_edge_list(spec["dataset"])
        name = str(spec["dataset"])
    elif spec.get("uniform"):
        try:
            n, deg = (int(x) for x in str(spec["uniform"]).split(","))
        except ValueError:
            raise SpecError(f"uniform: expected 'N,DEGREE', got {spec['uniform']!r}") from None
        g = generate_uniform(n, deg, int(spec["graph_seed"]))
        name = f"uniform-{n}-{deg}-s{spec['graph_seed']}"
    else:
        raise SpecError("dataset: need a dataset path or uniform N,DEGREE")
    if int(spec.get("min_followees") or 0) > 0:
        g = enforce_min_followees(g, int(spec["min_followees"]))
    return g, name


# -- ingest / gen-uniform ----------------------------------------------------


def cmd_ingest(args):
    try:
        raw = read_edge_list(args.path)
    except EdgeListParseError as e:
        print(f"{args.path}:{e.lineno}: {e.reason}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"{args.path}: {e.strerror}", file=sys.stderr)
        return EXIT_USAGE
    report = {
        "source": str(args.path),
        "min_followees": args.min_followees,
        "raw": graph_stats(raw).to_json(),
        "parse": vars(raw.parse_report) if raw.parse_report else None,
    }
    try:
        g = enforce_min_followees(raw, args.min_followees)
    except GraphAnnihilated as e:
        report["outcome"] = "graph annihilated"
        report["detail"] = str(e)
        _write(args.stats, metrics.json_text(report))
        print(f"graph annihilated: {e}", file=sys.stderr)
        return EXIT_ANNIHILATED
    report["outcome"] = "ok"
    report["filtered"] = graph_stats(g).to_json()
    if args.out:
        _write(args.out, format_edge_list(g, [f"min_followees={args.min_followees}"]))
    _write(args.stats, metrics.json_text(report))
    return 0


def cmd_gen_uniform(args):
    g = generate_uniform(args.n, args.degree, args.seed)
    _write(args.out, format_edge_list(g, [f"uniform n={args.n} degree={args.degree} seed={args.seed}"]))
    return 0


# -- meanfield ---------------------------------------------------------------


def _mf_kw(args):
    return {"kernel": args.kernel, "degree_rounding": args.degree_rounding}


def cmd_meanfield(args):
    kw = _mf_kw(args)
    Ds = parse_floats(args.D)
    meta = {"command": f"meanfield {args.kind}", "model": args.model, "kernel": args.kernel, "version": __version__}
    rows = []
    if args.kind == "trajectory":
        header = ["D", "step", "t", "c0", "share0"]
        meta.update(c0=args.c0, f=args.f, adversary=args.adversary, dt=args.dt)
        for D in Ds:
            c0 = args.c0 * (1.0 - args.f)
            state = _state_with_faults(c0, 1.0 - args.f - c0, args.f, args.adversary, D)
            tr = mean_field.integrate(state, args.model, args.adversary, args.dt, args.t_max, **kw)
            for i, (t, c) in enumerate(zip(tr.t.tolist(), tr.c0.tolist())):
                rows.append([D, i, t, c, c / (1.0 - args.f)])
    elif args.kind == "critical":
        header = ["p", "D", "f_critical"]
        meta.update(epsilon=args.epsilon, resolution=args.resolution)
        for p in parse_floats(args.p):
            for D in Ds:
                cp = mean_field.critical_point(p, D, args.epsilon, args.model, args.resolution, **kw)
                rows.append([p, D, cp.f_critical])
    elif args.kind == "fixed-points":
        header = ["f", "D", "c0_root", "stable"]
        for f in parse_floats(args.f_list if args.f_list is not None else str(args.f)):
            for D in Ds:
                for r in mean_field.fixed_points(f, D, args.model, **kw):
                    rows.append([f, D, r, _stable(f, D, r, args.model, kw)])
    else:  # rate
        header = ["D", "f", "c0", "a0", "dc0_dt"]
        meta.update(adversary=args.adversary)
        for D in Ds:
            top = 1.0 - args.f
            m = int(math.floor(top / args.step + 1e-9))
            for i in range(m + 1):
                c0 = i * args.step
                c1 = max(top - c0, 0.0)
                eff = mean_field.adversary_densities(args.adversary, c0, c1, args.f)
                r = mean_field.rate(c0, c1, eff.a0, eff.a1, D, args.model, **kw)
                rows.append([D, args.f, c0, eff.a0, r])
    meta["spec_hash"] = spec_hash({k: v for k, v in vars(args).items() if k != "func"})
    _write(args.out, metrics.csv_text(header, rows, meta))
    return 0


def _state_with_faults(c0, c1, f, adversary, D):
    if f == 0:
        return mean_field.MeanFieldState(c0, 1.0 - c0, D=D)
    f0, f1, fs = mean_field.ADVERSARIES[adversary](c0, c1, f)
    c1 = 1.0 - c0 - f0 - f1 - fs
    return mean_field.MeanFieldState(c0, c1, f0, f1, fs, D)


def _stable(f, D, root, model, kw, h=1e-4):
    g = mean_field._rate_curve(f, D, model, **kw)
    lo, hi = max(root - h, 0.0), min(root + h, 1.0 - f)
    return int(g(lo) >= 0 and g(hi) <= 0)


# -- simulate / sweep --------------------------------------------------------


def _norm_key(k):
    return k.replace("-", "_")


def resolve_spec(args, cli_keys):
    """Defaults < spec file < explicitly given flags."""
    spec = dict(SPEC_DEFAULTS)
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise SpecError("spec file must hold a JSON object")
        for k, v in loaded.items():
            k = _norm_key(k)
            if k not in SPEC_DEFAULTS:
                raise SpecError(f"{k}: unknown spec key")
            spec[k] = v
    for k in cli_keys:
        spec[k] = getattr(args, k)
    _validate(spec)
    return spec


def _validate(spec):
    if spec["mode"] not in ("sync", "async"):
        raise SpecError(f"mode: expected sync or async, got {spec['mode']!r}")
    if spec["adversary"] not in ADVERSARY_KINDS:
        raise SpecError(f"adversary: expected one of {', '.join(ADVERSARY_KINDS)}")
    if spec["selection"] not in ("random", "top"):
        raise SpecError("selection: expected random or top")
    if not 0.0 <= float(spec["fraction"]) <= 1.0:
        raise SpecError("fraction: must lie in [0, 1]")
    if spec["mode"] == "sync" and spec["adversary"] != "none" and float(spec["fraction"]) > 0:
        raise SpecError("adversary: synchronous mode has no faulty nodes")
    try:
        Fraction(str(spec["T"]))
    except ValueError:
        raise SpecError(f"T: not a number {spec['T']!r}") from None
    parse_seeds(spec["seeds"])


def _config(spec):
    cfg = ProtocolConfig(
        max_rounds=int(spec["max_rounds"]),
        T=Fraction(str(spec["T"])),
        timeout_ms=float(spec["timeout"]),
        model=spec["model"],
    )
    adv = AdversaryStrategy(spec["adversary"], float(spec["fraction"]), spec["selection"], spec["adversary_seed"])
    lat = LatencyModel(float(spec["mu"]), float(spec["sigma"]), float(spec["cutoff"]))
    return cfg, adv, lat, InitialConfiguration(float(spec["init_cvg"]))


def _one_run(job):
    spec, g, name, seed, backend = job
    try:
        cfg, adv, lat, init = _config(spec)
        if spec["mode"] == "sync":
            r = run_sync(g, spec["model"], init, cfg.max_rounds, seed)
        else:
            r = run_async(
                g, cfg, adv, lat, init, seed,
                horizon_ms=float(spec["horizon"]), tick_ms=float(spec["tick"]), backend=backend,
            )
    except Exception as e:  # reported per run; the batch goes on
        return seed, None, f"{type(e).__name__}: {e}"
    return seed, r, None


def _effective_f(spec):
    if spec["mode"] == "sync" or spec["adversary"] == "none":
        return 0.0
    return float(spec["fraction"])


def _run_row(spec, name, seed, r, err):
    if r is None:
        return [seed, name, spec["model"], spec["adversary"], _effective_f(spec)] + [None] * 11 + [err]
    if r.mode == "sync":
        rounds_p50 = rounds_max = r.rounds_to_consensus
        d0 = d1 = conf = dec = by_deadline = None
    else:
        rounds_p50 = float(np.median(r.rounds))
        rounds_max = int(r.rounds.max())
        d0, d1, conf, dec = r.d0, r.d1, r.confused, r.decision
        by_deadline = r.decided_within(float(spec["deadline"]))
    return [
        seed, name, spec["model"], spec["adversary"], _effective_f(spec),
        r.init_cvg, r.final_cvg_signed, dec, d0, d1, conf, rounds_p50, rounds_max,
        r.end_time_ms, int(r.complete), by_deadline, "",
    ]


def run_batch(spec, workers=1, backend=None):
    """Run every seed of ``spec``; returns (graph name, rows, results, errors)."""
    g, name = load_graph(spec)
    seeds = parse_seeds(spec["seeds"])
    jobs = [(spec, g, name, s, backend) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            done = list(ex.map(_one_run, jobs))
    else:
        done = [_one_run(j) for j in jobs]
    rows, results, errors = [], [], []
    for seed, r, err in done:
        rows.append(_run_row(spec, name, seed, r, err))
        if err:
            errors.append((seed, err))
            log.error("seed %d failed: %s", seed, err)
        else:
            results.append(r)
    return name, rows, results, errors


def batch_summary(spec, results):
    out = {"runs": 0}
    if not results:
        return out
    out = metrics.summarize(results).to_json()
    if spec["mode"] == "async":
        deadline = float(spec["deadline"])
        total = sum(r.n_correct for r in results)
        on_time = sum(int(round(r.decided_within(deadline) * r.n_correct)) for r in results)
        eps = float(spec["epsilon"])
        ok = [r for r in results if r.decision is not None and r.correct_decision_fraction is not None]
        out["timing"] = {"deadline_ms": deadline, "decided_fraction": on_time / total if total else None}
        out["goal"] = {
            "epsilon": eps,
            "runs_meeting_goal": sum(1 for r in ok if r.correct_decision_fraction >= 1.0 - eps),
            "runs_evaluated": len(ok),
        }
    return out


def _meta(spec, name):
    return {
        "spec_hash": spec_hash(spec),
        "seeds": ",".join(str(s) for s in parse_seeds(spec["seeds"])),
        "dataset": name,
        "version": __version__,
    }


def cmd_simulate(args, cli_keys):
    spec = resolve_spec(args, cli_keys)
    try:
        name, rows, results, errors = run_batch(spec, args.workers, args.backend)
    except GraphAnnihilated as e:
        print(f"graph annihilated: {e}", file=sys.stderr)
        return EXIT_ANNIHILATED
    meta = _meta(spec, name)
    _write(args.out_csv, metrics.csv_text(RUN_HEADER, rows, meta))
    if args.out_summary:
        summary = {"spec": spec, **meta, "summary": batch_summary(spec, results), "errors": errors}
        _write(args.out_summary, metrics.json_text(summary))
    return EXIT_RUN_ERROR if errors else 0


SWEEP_HEADER = [
    "param", "value", "runs", "errors", "failures", "incomplete", "decision_mean", "decision_lo", "decision_hi",
    "correct_fraction_mean", "correct_fraction_lo", "correct_fraction_hi", "pooled_correct_fraction",
    "decided_by_deadline", "runs_meeting_goal",
]


def cmd_sweep(args, cli_keys):
    base = resolve_spec(args, cli_keys)
    key = _norm_key(args.param)
    if key not in SPEC_DEFAULTS or key in ("seeds", "dataset", "uniform"):
        raise SpecError(f"param: cannot sweep {args.param!r}")
    values = [v.strip() for v in str(args.values).split(",") if v.strip()]
    if not values:
        raise SpecError("values: nothing to sweep")
    rows, any_error = [], False
    name = None
    for raw in values:
        spec = dict(base)
        default = SPEC_DEFAULTS[key]
        spec[key] = type(default)(raw) if isinstance(default, (int, float)) and not isinstance(default, bool) else raw
        _validate(spec)
        try:
            name, _, results, errors = run_batch(spec, args.workers, args.backend)
        except GraphAnnihilated as e:
            print(f"graph annihilated: {e}", file=sys.stderr)
            return EXIT_ANNIHILATED
        any_error |= bool(errors)
        s = batch_summary(spec, results)
        dec = s.get("decision", {})
        cf = s.get("correct_fraction", {})
        rows.append([
            key, spec[key], s.get("runs", 0), len(errors), s.get("failures"), s.get("incomplete"),
            dec.get("mean"), *(dec.get("ci95") or [None, None]),
            cf.get("mean"), *(cf.get("ci95") or [None, None]),
            s.get("pooled", {}).get("correct_fraction"),
            s.get("timing", {}).get("decided_fraction"),
            s.get("goal", {}).get("runs_meeting_goal"),
        ])
    meta = _meta(base, name)
    meta["sweep"] = f"{key}={','.join(values)}"
    _write(args.out, metrics.csv_text(SWEEP_HEADER, rows, meta))
    return EXIT_RUN_ERROR if any_error else 0


# -- argument parsing --------------------------------------------------------


def _add_spec_flags(p):
    p.add_argument("--spec", help="JSON file with flat keys named like the flags")
    p.add_argument("--mode", choices=("sync", "async"))
    p.add_argument("--dataset", help="edge list (follower followee per line)")
    p.add_argument("--uniform", metavar="N,DEGREE", help="generate a uniform graph instead of reading one")
    p.add_argument("--graph-seed", type=int)
    p.add_argument("--min-followees", type=int, help="peel nodes below this followee count first")
    p.add_argument("--model", choices=("sky", "mr", "sa", "voter", "sznajd"))
    p.add_argument("--adversary", choices=ADVERSARY_KINDS)
    p.add_argument("--fraction", type=float, help="faulty fraction f")
    p.add_argument("--selection", choices=("random", "top"))
    p.add_argument("--adversary-seed", type=int, help="fix the faulty set across run seeds")
    p.add_argument("--init-cvg", type=float, help="target initial signed convergence")
    p.add_argument("--mu", type=float, help="latency mean, ms (500)")
    p.add_argument("--sigma", type=float, help="latency std dev, ms (500)")
    p.add_argument("--cutoff", type=float, help="latency lower cutoff, ms (50)")
    p.add_argument("--timeout", type=float, help="failure detector timeout, ms (2000)")
    p.add_argument("--max-rounds", type=int, help="rounds before the final decision (40)")
    p.add_argument("--T", help="decision threshold (2/3)")
    p.add_argument("--horizon", type=float, help="simulated time limit, ms (300000)")
    p.add_argument("--tick", type=float, help="faulty node emission period, ms (1000)")
    p.add_argument("--seeds", help="e.g. 0-19 or 1,4,7")
    p.add_argument("--deadline", type=float, help="report the share decided by this time, ms (70000)")
    p.add_argument("--epsilon", type=float, help="success threshold on the wrong-decision share (0.05)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--backend", choices=("python", "cython"), help="async event loop (default: compiled if built)")


def build_parser():
    ap = argparse.ArgumentParser(prog="skyconsensus", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, de-duplicate and filter an edge list")
    p.add_argument("path")
    p.add_argument("--min-followees", type=int, default=10)
    p.add_argument("--out", help="canonical filtered edge list")
    p.add_argument("--stats", default="-", help="stats JSON (default stdout)")

    p = sub.add_parser("gen-uniform", help="random graph where every node follows DEGREE others")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="-")

    p = sub.add_parser("meanfield", help="mean-field series as CSV")
    p.add_argument("kind", choices=("trajectory", "critical", "fixed-points", "rate"))
    p.add_argument("--model", choices=mean_field.MEAN_FIELD_MODELS, default="sky")
    p.add_argument("--D", default="5,10,50,100,400", help="mean degrees: list or a:b:step")
    p.add_argument("--c0", type=float, default=0.501, help="trajectory: initial correct 0-share")
    p.add_argument("--f", type=float, default=0.0, help="faulty density")
    p.add_argument("--f-list", help="fixed-points: several f values")
    p.add_argument("--p", default="0.5:1:0.05", help="critical: initial 0-shares")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--resolution", type=float, default=1e-4)
    p.add_argument("--adversary", choices=sorted(mean_field.ADVERSARIES), default="always-1")
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--t-max", type=float, default=mean_field.DEFAULT_T_MAX)
    p.add_argument("--step", type=float, default=0.01, help="rate: c0 grid step")
    p.add_argument("--kernel", choices=("printed", "exact"), default="printed")
    p.add_argument("--degree-rounding", choices=("nearest", "floor"), default="nearest")
    p.add_argument("--out", default="-")

    p = sub.add_parser("simulate", help="seeded batch of sync or async runs")
    _add_spec_flags(p)
    p.add_argument("--out-csv", default="-")
    p.add_argument("--out-summary")

    p = sub.add_parser("sweep", help="repeat a batch over values of one spec key")
    _add_spec_flags(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--out", default="-")
    return ap


def _given_spec_keys(args):
    return [k for k in SPEC_DEFAULTS if getattr(args, k, None) is not None]


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "gen-uniform":
            return cmd_gen_uniform(args)
        if args.command == "meanfield":
            return cmd_meanfield(args)
        if args.command == "simulate":
            return cmd_simulate(args, _given_spec_keys(args))
        return cmd_sweep(args, _given_spec_keys(args))
    except (SpecError, EdgeListParseError, ValueError) as e:
        ap.exit(EXIT_USAGE, f"skyconsensus {args.command}: error: {e}\n")
    except OSError as e:
        ap.exit(EXIT_USAGE, f"skyconsensus {args.command}: error: {e}\n")


if __name__ == "__main__":
    sys.exit(main())
