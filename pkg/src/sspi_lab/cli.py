"""Command line entry point: ``sspi-lab {run,exact,verify,gen,worst}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness as H
from .adversary import FIXED_ORDER_NAMES, worst_order_adaptive
from .core import RandomSource, draw_realization
from .errors import SSPIError
from .reductions import get_policy, policy_names

log = logging.getLogger("sspi_lab")

ADVERSARY_HELP = "exhaustive | adaptive | random | fixed:<name> with name in " + ", ".join(FIXED_ORDER_NAMES)


def _add_common(p: argparse.ArgumentParser, trials: int = 100_000) -> None:
    p.add_argument("--policy", required=True, help="one of: " + ", ".join(policy_names()))
    p.add_argument("--instance", required=True,
                   help="instance JSON file, or a generator spec such as 'random-graph:n=5,p=0.6,seed=2'")
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--adversary", default="exhaustive", help=ADVERSARY_HELP)
    p.add_argument("--bound", type=float, default=None, help="competitive bound to check (default per policy)")
    p.add_argument("--out", default=None, help="write the CSV report here")
    p.add_argument("--json", action="store_true", help="print the full report as JSON")
    p.add_argument("--trace", default=None, help="write per-decision events (JSON lines) for a few realizations")
    p.add_argument("--trace-trials", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sspi-lab", description="Single-sample prophet inequality experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte Carlo competitive-ratio estimate")
    _add_common(run)
    exact = sub.add_parser("exact", help="exact expectations over every realization pattern")
    _add_common(exact, trials=1)

    verify = sub.add_parser("verify", help="run property suites")
    verify.add_argument("--suite", action="append", choices=H.SUITES + ("all",), default=None)
    verify.add_argument("--trials", type=int, default=None, help="scale override (defaults per suite)")
    verify.add_argument("--seed", type=int, default=0)

    gen = sub.add_parser("gen", help="write random instance files")
    gen.add_argument("--family", required=True, choices=H.GENERATOR_FAMILIES)
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--dist", default="two-point", choices=H.DIST_FAMILIES)
    gen.add_argument("--n", type=int, default=4, help="vertices or elements")
    gen.add_argument("--p", type=float, default=1.0, help="edge probability")
    gen.add_argument("--buyers", type=int, default=2)
    gen.add_argument("--items", type=int, default=2)
    gen.add_argument("--budget-range", type=float, nargs=2, default=(5.0, 15.0), metavar=("LO", "HI"))
    gen.add_argument("--out", required=True, help="output directory")

    worst = sub.add_parser("worst", help="search for a worst arrival order")
    worst.add_argument("--policy", required=True)
    worst.add_argument("--instance", required=True)
    worst.add_argument("--seed", type=int, default=0)
    worst.add_argument("--trials", type=int, default=10_000)
    worst.add_argument("--adaptive", action="store_true",
                       help="adaptive search against a single realization drawn from --seed")
    worst.add_argument("--exact", action="store_true", help="minimize against the exact ensemble")
    return parser


def _config(args, mode: str) -> H.ExperimentConfig:
    return H.ExperimentConfig(policy=args.policy, instance=args.instance, trials=args.trials, seed=args.seed,
                              adversary=args.adversary, mode=mode, bound=args.bound, out=args.out, trace=args.trace)


def _print_report(rep: H.CompetitiveReport, as_json: bool) -> None:
    if as_json:
        print(H.report_json(rep))
        return
    ratio = "n/a (E[ALG]=0)" if rep.ratio is None else f"{rep.ratio:.4f}"
    print(f"policy={rep.policy} instance={rep.instance} mode={rep.mode} adversary={rep.adversary} trials={rep.trials}")
    print(f"E[ALG]={rep.e_alg:.6g} +/- {rep.ci_alg:.3g}  E[OPT]={rep.e_opt:.6g} +/- {rep.ci_opt:.3g}  ratio={ratio}")
    print(f"worst order ({rep.order_kind}, {rep.orders_searched} searched): {' '.join(map(str, rep.worst_order))}")
    if rep.bound is not None:
        verdict = "PASS" if rep.bound_ok else "FAIL"
        print(f"{verdict} bound {rep.bound:g}: lower limit of bound*ALG-OPT = {rep.bound_margin:.6g}")


def _write_trace(config: H.ExperimentConfig, rep: H.CompetitiveReport, count: int) -> None:
    inst = config.load()
    pol = get_policy(config.policy)
    units = list(pol.units(inst))
    order = list(rep.worst_order) if set(rep.worst_order) == set(units) else units
    root = RandomSource(config.seed).fork("trace")
    with open(config.trace, "w") as fh:
        for t in range(count):
            real = draw_realization(inst, root.fork(t))
            value, records = pol.run(inst, real, order, root.fork(("policy", t)))
            fh.write(json.dumps({"trial": t, "order": order, "realization": real.to_json(), "value": value,
                                 "accepted": [list(map(_plain, r)) for r in records]}) + "\n")


def _plain(x):
    return list(x) if isinstance(x, tuple) else x


def cmd_run(args, mode: str) -> int:
    cfg = _config(args, mode)
    rep = H.exact_ratio(cfg) if mode == "exact" else H.estimate_ratio(cfg)
    _print_report(rep, args.json)
    if args.out:
        H.write_csv([rep], args.out)
    if args.trace:
        _write_trace(cfg, rep, args.trace_trials)
    return 0 if rep.bound_ok in (None, True) else 1


def cmd_verify(args) -> int:
    suites = args.suite or ["all"]
    if "all" in suites:
        suites = list(H.SUITES)
    ok = True
    for name in suites:
        res = H.run_property_suite(name, trials=args.trials, seed=args.seed)
        for line in res.lines():
            print(line)
        ok &= res.passed
    return 0 if ok else 1


def cmd_gen(args) -> int:
    spec = {"family": args.family, "count": args.count, "seed": args.seed, "dist": args.dist}
    if args.family in ("random-graph", "single-choice"):
        spec["n"] = args.n
    if args.family != "single-choice":
        spec["p"] = args.p
    if args.family in ("bipartite", "transversal", "budget-additive"):
        spec.update(buyers=args.buyers, items=args.items)
    if args.family == "budget-additive":
        spec["budget_range"] = tuple(args.budget_range)
    out = H.generate_instances(spec, args.out)
    print(f"wrote {len(out)} {args.family} instance(s) to {args.out}")
    return 0


def cmd_worst(args) -> int:
    if args.adaptive:
        cfg = H.ExperimentConfig(policy=args.policy, instance=args.instance, seed=args.seed)
        inst = cfg.load()
        pol = get_policy(args.policy)
        pol.check(inst)
        real = draw_realization(inst, RandomSource(args.seed).fork("adaptive"))
        tr = worst_order_adaptive(inst, real, pol, RandomSource(args.seed).fork("policy"))
        print(f"adaptive worst order: {' '.join(map(str, tr.order))}  value={tr.value:.6g}  nodes={tr.nodes}")
        return 0
    cfg = H.ExperimentConfig(policy=args.policy, instance=args.instance, trials=args.trials, seed=args.seed,
                             adversary="exhaustive", mode="exact" if args.exact else "monte-carlo")
    rep = H.estimate_ratio(cfg)
    print(f"worst static order ({rep.order_kind}, {rep.orders_searched} searched): "
          f"{' '.join(map(str, rep.worst_order))}  E[ALG]={rep.e_alg:.6g}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args, "monte-carlo")
        if args.command == "exact":
            return cmd_run(args, "exact")
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "gen":
            return cmd_gen(args)
        return cmd_worst(args)
    except (SSPIError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
