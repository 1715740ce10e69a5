"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 experiment finished with
failed trials, 3 infeasible privacy budget.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from pydantic import ValidationError

from . import amplification
from .errors import DPAssortError, InfeasibleBudgetError
from .estimators import ALGORITHMS, BudgetSpec, estimate
from .graph import exact_stats, generate_ba, load_edge_list_file, save_edge_list
from .harness import load_spec, run_experiment
from .mechanisms import RngStream, test_mode_enabled

OUT_DIR_ENV = "DPASSORT_OUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_INFEASIBLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_graph_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", metavar="PATH", help="edge-list file")
    src.add_argument("--ba", nargs=2, type=int, metavar=("N", "M"), help="generate a BA graph instead")
    p.add_argument("--ba-seed", type=int, default=0)
    p.add_argument("--one-indexed", action="store_true")
    p.add_argument("--skip-header", action="store_true", help="ignore the first non-comment line (CSV exports)")


def _load_graph(args):
    if args.ba is not None:
        return generate_ba(args.ba[0], args.ba[1], args.ba_seed)
    return load_edge_list_file(args.graph, one_indexed=args.one_indexed, skip_header=args.skip_header)


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / name


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpassort", description="Differentially private network assortativity.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exact", help="exact (non-private) assortativity statistics")
    _add_graph_source(p)

    p = sub.add_parser("estimate", help="one private estimate of the assortativity factor")
    _add_graph_source(p)
    p.add_argument("--algo", choices=ALGORITHMS, required=True)
    p.add_argument("--eps", type=float, required=True, help="total privacy budget")
    p.add_argument("--eps1", type=float)
    p.add_argument("--eps2", type=float)
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--delta", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m-override", type=int)
    p.add_argument("--bound-table", metavar="CSV", help="tabulated (epsilon0,epsilon) bound for shuffle")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", metavar="PATH", help="also write the estimate as JSON")
    if test_mode_enabled():
        p.add_argument("--noiseless", action="store_true", help="disable all noise (test mode only)")

    p = sub.add_parser("experiment", help="run an experiment described by a JSON spec")
    p.add_argument("spec", metavar="SPEC_JSON")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--prefix", default="experiment")
    p.add_argument("--workers", type=int)
    p.add_argument("--trials", type=int, help="override both trials_re and trials_sign")
    p.add_argument("--re-paper-literal", dest="re_literal_min", action="store_true",
                   help="use the signed min(r_u, eta) relative-error denominator")
    p.add_argument("--m-override", type=int)
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="what to echo on stdout")

    p = sub.add_parser("gen-ba", help="write a Barabasi-Albert graph as an edge list")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH")

    p = sub.add_parser("amplify", help="shuffle amplification accounting")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, default=1e-8)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--eps0", type=float, help="local budget (forward direction)")
    g.add_argument("--eps", type=float, help="target central budget (inverse direction)")
    return parser


def cmd_exact(args) -> int:
    g = _load_graph(args)
    s = exact_stats(g)
    print(f"n={s.n}")
    print(f"M={s.M}")
    print(f"d_max={s.d_max}")
    print(f"d_avg={s.d_avg:.2f}")
    print(f"r_u={s.r_u:.2f}")
    print(f"r_d={s.r_d:.6g}")
    print("r=undefined" if s.r is None else f"r={s.r:.6f}")
    return EXIT_OK


def _estimate_budgets(args) -> BudgetSpec:
    if args.algo == "shuffle":
        return BudgetSpec.shuffle(args.eps, args.delta, args.alpha)
    if args.eps1 is not None or args.eps2 is not None:
        eps1 = args.eps1 if args.eps1 is not None else args.eps - args.eps2
        eps2 = args.eps2 if args.eps2 is not None else args.eps - args.eps1
        return BudgetSpec(epsilon=args.eps, eps1=eps1, eps2=eps2,
                          delta=args.delta if args.algo == "decentral" else 0.0)
    if args.algo == "local":
        return BudgetSpec.local(args.eps)
    return BudgetSpec.decentral(args.eps, args.delta)


def cmd_estimate(args) -> int:
    g = _load_graph(args)
    budgets = _estimate_budgets(args)
    kwargs = {"m_override": args.m_override, "noiseless": getattr(args, "noiseless", False)}
    if args.algo == "shuffle" and args.bound_table:
        table = amplification.TabulatedBound.from_file(args.bound_table, delta=args.delta)
        kwargs.update(bound_mode="external_numerical", bound=table)
    est = estimate(g, args.algo, budgets, RngStream(seed=args.seed), **kwargs)
    payload = est.to_dict()
    if args.algo == "shuffle" and est.epsilon0 is not None:
        payload["epsilon0_cap"] = amplification.epsilon0_cap(g.n, args.delta)
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        print(f"algorithm={est.algorithm}")
        print(f"q_hat={est.q_hat!r}")
        print(f"X={est.X!r}")
        print(f"Y={est.Y!r}")
        print(f"M={est.M_used}")
        print("budgets=" + " ".join(f"{k}={v}" for k, v in budgets.to_dict().items()))
        if est.epsilon0 is not None:
            print(f"epsilon0={est.epsilon0!r}")
            print(f"epsilon0_cap={payload['epsilon0_cap']!r}")
        if est.sensitivity is not None:
            print(f"Delta={est.sensitivity!r}")
        print(f"seed={est.seed}")
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        spec = load_spec(args.spec)
    except ValidationError as exc:
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"])
            print(f"invalid spec: {loc}: {err['msg']}", file=sys.stderr)
        return EXIT_USAGE
    updates = {}
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.trials is not None:
        if args.trials < 1:
            print("invalid option: --trials must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        updates["trials_re"] = updates["trials_sign"] = args.trials
    if args.re_literal_min:
        updates["re_literal_min"] = True
    if args.m_override is not None:
        updates["m_override"] = args.m_override
    if updates:
        spec = spec.model_copy(update=updates)

    def progress(algorithm, eps, done, total):
        print(f"[{done}/{total}] {algorithm} eps={eps:g}", file=sys.stderr)

    result = run_experiment(spec, progress=progress)
    out_dir = Path(args.out) if args.out else _default_out("results")
    paths = result.write(out_dir, prefix=args.prefix)
    if args.format == "json":
        print(json.dumps(result.to_json(), indent=2))
    else:
        sys.stdout.write(result.summary_csv())
    for kind, path in paths.items():
        print(f"wrote {kind}: {path}", file=sys.stderr)
    if not result.complete:
        for cell in result.cells:
            for rec in cell.failures:
                print(f"failed: {cell.algorithm} eps={cell.epsilon:g} trial={rec.trial}: {rec.error}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_gen_ba(args) -> int:
    g = generate_ba(args.n, args.m, args.seed)
    out = Path(args.out) if args.out else _default_out(f"ba_n{args.n}_m{args.m}_s{args.seed}.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        save_edge_list(g, fh)
    print(f"n={g.n}")
    print(f"M={g.M}")
    print(f"wrote {out}", file=sys.stderr)
    return EXIT_OK


def cmd_amplify(args) -> int:
    cap = amplification.epsilon0_cap(args.n, args.delta)
    print(f"epsilon0_cap={cap!r}")
    if args.eps0 is not None:
        print(f"epsilon={amplification.amplified_epsilon(args.n, args.eps0, args.delta)!r}")
    else:
        eps0 = amplification.local_budget_for(args.n, args.eps, args.delta)
        print(f"epsilon0={eps0!r}")
        print(f"epsilon={amplification.amplified_epsilon(args.n, eps0, args.delta)!r}")
    return EXIT_OK


COMMANDS = {
    "exact": cmd_exact,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "gen-ba": cmd_gen_ba,
    "amplify": cmd_amplify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InfeasibleBudgetError as exc:
        print(f"error: infeasible budget: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DPAssortError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
