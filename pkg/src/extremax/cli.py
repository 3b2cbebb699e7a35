"""Command-line entry point: ``extremax {lossless,quantize,rdf,interactive,experiment}``.

Exit codes: 0 success, 2 invalid input, 3 solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import harness, interactive as inter, lossless, quantizer as qz, rdf
from .errors import ConvergenceError, ExtremaxError
from .sources import ContinuousSource, DiscreteSource, entropy, expected_max, source_from_config

EXIT_OK, EXIT_INVALID, EXIT_CONVERGENCE = 0, 2, 3


def _load_source(text: str):
    """Inline JSON or a path to a JSON file."""
    if os.path.exists(text):
        with open(text) as fh:
            text = fh.read()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ExtremaxError(f"source config is not valid JSON: {exc}") from exc
    return source_from_config(cfg)


def _range(text: str):
    lo, _, hi = text.partition("..")
    if not hi:
        raise ExtremaxError(f"expected a range like 2..16, got {text!r}")
    return range(int(lo), int(hi) + 1)


def _emit_csv(rows, cols, out=None):
    w = csv.writer(out or sys.stdout, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])


def _print_json(obj):
    print(json.dumps(obj, indent=2))


def cmd_lossless(a) -> int:
    src = _load_source(a.source)
    if not isinstance(src, DiscreteSource):
        raise ExtremaxError("lossless needs a discrete source")
    n = a.users
    out = {"users": n, "levels": src.size, "entropy_bits": entropy(src),
           "independent_rate_bits": n * entropy(src)}
    rate = {"argmax": lossless.rate_argmax, "max": lossless.rate_max, "pair": lossless.rate_pair}[a.target]
    out["rate_bits"] = rate(src, n)
    out["saving_bits"] = lossless.savings(src, n, a.target)
    if a.target == "argmax":
        out["merge_pattern"] = [list(m) for m in lossless.merge_pattern(n, src.size)]
    _print_json(out)
    return EXIT_OK


def cmd_quantize(a) -> int:
    src = _load_source(a.source)
    if not isinstance(src, ContinuousSource):
        raise ExtremaxError("quantize needs a continuous source")
    n, target = a.users, a.target
    ks = _range(a.sweep) if a.sweep else [a.bins]
    rows = []
    for K in ks:
        if a.rate_limit is not None:
            if target != "argmax":
                raise ExtremaxError("--rate-limit applies to the argmax HomSQ design")
            res = qz.design_entropy_constrained_homsq(src, n, K, a.rate_limit)
            pt = qz.homsq_rate_point(res.quantizer, src, n, "entropy-constrained HomSQ")
            extra = {"mu_rate": res.mu_rate, "kkt_residual": res.kkt_residual, "constraint_active": res.active}
        elif target == "argmax":
            q = qz.design_min_distortion_homsq(src, n, K)
            pt = qz.homsq_rate_point(q, src, n)
            if a.het and K >= 2 and n >= 2:
                _, pt = qz.hetsq_from_homsq(q, src, n, distortion=pt.distortion)
            extra = {}
        else:
            _, pt = qz.optimize_hetsq(src, target, K, n_users=n, homogeneous=not a.het)
            extra = {}
        d = pt.to_dict()
        d.update(extra)
        rows.append(d)
    if a.sweep:
        _emit_csv([{"K": r["k"], "rate_per_user_bits": r["rate_per_user_bits"], "distortion": r["distortion"],
                    "normalized_distortion": r["normalized_distortion"]} for r in rows],
                  ["K", "rate_per_user_bits", "distortion", "normalized_distortion"])
    else:
        _print_json(rows[0])
    return EXIT_OK


def cmd_rdf(a) -> int:
    src = _load_source(a.source)
    problem = rdf.build_rd_problem(src, a.users, a.disc, a.target)
    pts = rdf.ba_sweep(problem, rdf.default_slopes(problem, a.points))
    emax = problem.expected_max
    _emit_csv([{"mu": p.mu, "rate_bits": p.rate_bits, "distortion": p.distortion,
                "normalized_distortion": p.distortion / emax} for p in pts],
              ["mu", "rate_bits", "distortion", "normalized_distortion"])
    return EXIT_OK


def cmd_interactive(a) -> int:
    src = _load_source(a.source)
    if not isinstance(src, DiscreteSource):
        raise ExtremaxError("interactive needs a discrete source")
    if a.sweep_users or a.sweep_levels:
        rows = []
        for v in _range(a.sweep_users or a.sweep_levels):
            s, n = (src, v) if a.sweep_users else (DiscreteSource.uniform(v), a.users)
            pol = inter.dp_optimal_policy(s, n, a.target, a.cost)
            sim = inter.simulate_mtis(s, n, pol, a.seed, a.trials)
            rows.append({"N": n, "L": s.size, "dp_expected_bits": pol.expected_bits,
                         "simulated_mean_bits": sim.mean_bits, "simulated_std": sim.std_bits})
        _emit_csv(rows, ["N", "L", "dp_expected_bits", "simulated_mean_bits", "simulated_std"])
        return EXIT_OK
    if a.baseline == "median":
        _print_json({"scheme": "median", "levels": src.size,
                     "recursion_bits": inter.median_scheme_2user(src.size),
                     "exact_bits": inter.median_scheme_2user_exact(src.size),
                     "bound_bits": inter.median_bound(src.size)})
        return EXIT_OK
    if a.baseline in ("ris", "nbis"):
        sim = (inter.simulate_ris if a.baseline == "ris" else inter.simulate_nbis)(src, a.users, a.seed, a.trials)
        _print_json(sim.to_dict())
        return EXIT_OK
    pol = inter.dp_optimal_policy(src, a.users, a.target, a.cost)
    sim = inter.simulate_mtis(src, a.users, pol, a.seed, a.trials)
    out = {"dp_expected_bits": pol.expected_bits}
    out.update(sim.to_dict())
    _print_json(out)
    return EXIT_OK


def cmd_experiment(a) -> int:
    spec = harness.ExperimentSpec(a.id, json.loads(a.source) if a.source else
                                  {"kind": "uniform", "a": 0, "b": 1},
                                  a.users, tuple(_range(a.sweep)) if a.sweep else (),
                                  a.trials, a.seed, a.out)
    rows = harness.run_experiment(spec)
    if not a.out:
        sys.stdout.write(harness.to_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="extremax", description="Distributed max/argmax computation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("lossless", help="non-interactive lossless rates")
    s.add_argument("--source", required=True)
    s.add_argument("--users", type=int, required=True)
    s.add_argument("--target", choices=["argmax", "max", "pair"], default="argmax")
    s.set_defaults(func=cmd_lossless)

    s = sub.add_parser("quantize", help="scalar quantizer design")
    s.add_argument("--source", required=True)
    s.add_argument("--target", choices=["argmax", "max", "pair"], default="argmax")
    s.add_argument("--users", type=int, default=2)
    s.add_argument("--bins", type=int, default=2)
    s.add_argument("--rate-limit", type=float, default=None)
    s.add_argument("--het", action="store_true")
    s.add_argument("--sweep", default=None, help="bin range K1..K2, emits CSV")
    s.set_defaults(func=cmd_quantize)

    s = sub.add_parser("rdf", help="rate-distortion lower bound")
    s.add_argument("--source", required=True)
    s.add_argument("--users", type=int, default=2)
    s.add_argument("--disc", type=int, default=16)
    s.add_argument("--target", choices=["argmax", "max", "pair"], default="argmax")
    s.add_argument("--points", type=int, default=64)
    s.set_defaults(func=cmd_rdf)

    s = sub.add_parser("interactive", help="multi-threshold interactive scheme")
    s.add_argument("--source", required=True)
    s.add_argument("--users", type=int, default=2)
    s.add_argument("--target", choices=["argmax", "max", "pair"], default="argmax")
    s.add_argument("--cost", choices=list(inter.COST_MODELS), default="sw")
    s.add_argument("--trials", type=int, default=harness.DEFAULT_TRIALS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--baseline", choices=["ris", "nbis", "median"], default=None)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--sweep-users", default=None)
    g.add_argument("--sweep-levels", default=None)
    s.set_defaults(func=cmd_interactive)

    s = sub.add_parser("experiment", help="reproduce a figure or table as data")
    s.add_argument("--id", required=True, choices=sorted(harness.EXPERIMENTS))
    s.add_argument("--out", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=int, default=harness.DEFAULT_TRIALS)
    s.add_argument("--users", type=int, default=2)
    s.add_argument("--sweep", default=None)
    s.add_argument("--source", default=None)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ExtremaxError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
