"""Command-line front end: generate, solve, check, bench, exchange.

Exit codes: 0 success (solver status optimal / check ran / files written),
1 usage error, 2 solver stopped at its iteration cap or diverged,
3 I/O or validation failure. The MARKET_EQ_LOG environment variable
(error, info, debug) controls stderr verbosity.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import fileio
from .driver import SolveConfig, run_solve
from .errors import MarketError
from .exchange import solve_exchange, verify_fixed_point
from .instance import (ExchangeInstance, FisherInstance, GeneratorConfig,
                       generate_exchange, generate_fisher)
from .kkt import residuals_compact, residuals_lifted
from .report import SolveReport, instance_fingerprint

log = logging.getLogger("market_eq")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_UNSOLVED = 2
EXIT_DATA = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging():
    level_name = os.environ.get("MARKET_EQ_LOG", "error").lower()
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(level_name, logging.ERROR)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(level)


def _add_solver_flags(p):
    p.add_argument("--algo", choices=("pdhg", "pdhcg"), default="pdhcg")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=100_000)
    p.add_argument("--restart", default="adaptive",
                   help="'adaptive' or 'fixed:K' (default adaptive)")
    p.add_argument("--sections", type=int, default=32)
    p.add_argument("--step", choices=("theory", "adaptive"), default="adaptive")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--check-every", type=int, default=40)
    p.add_argument("--subproblem-tol", type=float, default=1e-10)


def _config_from_args(args):
    restart = args.restart
    if restart == "adaptive":
        mode, k = "adaptive", 0
    elif restart.startswith("fixed:"):
        mode, k = "fixed", int(restart.split(":", 1)[1])
    else:
        raise ValueError(f"bad --restart value {restart!r}")
    return SolveConfig(tol=args.tol, max_iters=args.max_iters, restart=mode,
                       restart_k=k, sections=args.sections, step_mode=args.step,
                       threads=args.threads, check_every=args.check_every,
                       subproblem_tol=args.subproblem_tol)


def cmd_generate(args):
    cfg = GeneratorConfig(n=args.n, m=args.m, sparsity_u=args.sparsity_u,
                          sparsity_e=args.sparsity_e, seed=args.seed)
    if args.kind == "fisher":
        inst = generate_fisher(cfg)
    else:
        inst = generate_exchange(cfg)
    paths = fileio.save(inst, args.out, fmt=args.format)
    print(json.dumps({"written": paths,
                      "fingerprint": instance_fingerprint(inst),
                      "nnz_u": inst.utilities.nnz}))
    return EXIT_OK


def cmd_solve(args):
    inst = fileio.load(args.instance, fmt=args.format)
    if not isinstance(inst, FisherInstance):
        raise MarketError("solve expects a Fisher instance (with budgets); "
                          "use the exchange command for endowment instances")
    cfg = _config_from_args(args)
    report = run_solve(inst, cfg, algo=args.algo)
    out = args.out or f"{args.instance}.report.json"
    report.to_json(out)
    print(json.dumps({"status": report.status,
                      "inner_iterations": report.inner_iterations,
                      "restarts": report.restarts,
                      "rel_kkt": report.final_residuals.rel_kkt,
                      "wall_time_seconds": report.wall_time_seconds,
                      "report": out}))
    return EXIT_OK if report.status == "optimal" else EXIT_UNSOLVED


def cmd_check(args):
    inst = fileio.load(args.instance, fmt=args.format)
    report = SolveReport.from_json(args.solution)
    x = report.allocation
    p = report.prices
    if isinstance(inst, ExchangeInstance):
        raise MarketError("check expects a Fisher instance")
    if report.solver == "pdhg" and report.utility_values is not None:
        res = residuals_lifted(inst, x, report.utility_values, p,
                               report.dual_values)
    else:
        res = residuals_compact(inst, x, p)
    payload = res.as_dict()
    payload["matches_report"] = bool(
        abs(res.rel_kkt - report.final_residuals.rel_kkt) <= 1e-12)
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def _geomean(values):
    values = np.asarray(values, dtype=np.float64)
    return float(np.exp(np.mean(np.log(np.maximum(values, 1e-300)))))


def cmd_bench(args):
    with open(args.suite) as fh:
        suite = json.load(fh)
    solvers = suite.get("solvers", ["pdhcg", "pdhg"])
    seeds = suite.get("seeds", [0])
    rows = []
    report_dir = args.report_dir
    if report_dir:
        os.makedirs(report_dir, exist_ok=True)
    for entry in suite["configs"]:
        gen = GeneratorConfig(n=entry["n"], m=entry["m"],
                              sparsity_u=entry["sparsity_u"],
                              sparsity_e=entry.get("sparsity_e", 0.5))
        for solver in solvers:
            iters, times, statuses = [], [], []
            for seed in seeds:
                inst = generate_fisher(GeneratorConfig(
                    n=gen.n, m=gen.m, sparsity_u=gen.sparsity_u,
                    sparsity_e=gen.sparsity_e, seed=seed))
                cfg = SolveConfig(tol=entry.get("tol", 1e-4),
                                  max_iters=entry.get("max_iters", 100_000),
                                  sections=entry.get("sections", 32),
                                  threads=args.threads)
                rep = run_solve(inst, cfg, algo=solver)
                iters.append(rep.inner_iterations)
                times.append(rep.wall_time_seconds)
                statuses.append(rep.status)
                if report_dir:
                    rep.to_json(os.path.join(
                        report_dir,
                        f"n{gen.n}_m{gen.m}_q{gen.sparsity_u}_{solver}_s{seed}.json"))
            rows.append({
                "n": gen.n, "m": gen.m, "sparsity_u": gen.sparsity_u,
                "solver": solver, "seeds": len(seeds),
                "geomean_iterations": _geomean(iters),
                "geomean_time_seconds": _geomean(times),
                "all_optimal": all(s == "optimal" for s in statuses),
            })
    fieldnames = ["n", "m", "sparsity_u", "solver", "seeds",
                  "geomean_iterations", "geomean_time_seconds", "all_optimal"]
    out_fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out_fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out_fh.close()
    return EXIT_OK if all(r["all_optimal"] for r in rows) else EXIT_UNSOLVED


def cmd_exchange(args):
    inst = fileio.load(args.instance, fmt=args.format)
    if not isinstance(inst, ExchangeInstance):
        raise MarketError("exchange expects an instance with endowments")
    cfg = _config_from_args(args)
    trace = solve_exchange(inst, outer_tol=args.outer_tol,
                           max_outer=args.max_outer, inner_config=cfg)
    out = args.out or f"{args.instance}.trace.json"
    trace.to_json(out)
    result = {"status": trace.status, "outer_iterations": trace.outer_iterations,
              "final_gap": trace.budget_gaps[-1] if trace.budget_gaps else None,
              "trace": out}
    if trace.status == "converged" and args.verify:
        gap, _ = verify_fixed_point(inst, trace.final_budgets,
                                    inner_tol=args.outer_tol / 100.0,
                                    inner_config=cfg)
        result["verified_fixed_point_gap"] = gap
    if trace.inner_reports:
        final_report_path = out.replace(".trace.json", ".report.json")
        if final_report_path == out:
            final_report_path = out + ".report.json"
        trace.inner_reports[-1].to_json(final_report_path)
        result["final_inner_report"] = final_report_path
    print(json.dumps(result))
    return EXIT_OK if trace.status == "converged" else EXIT_UNSOLVED


def build_parser():
    parser = _Parser(prog="market-eq",
                     description="Matrix-free market equilibrium solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic instance")
    p.add_argument("--kind", choices=("fisher", "exchange"), default="fisher")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--sparsity-u", type=float, default=0.2)
    p.add_argument("--sparsity-e", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=fileio.FORMATS, default="mtx")
    p.add_argument("--out", required=True, help="path prefix for instance files")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve a Fisher instance")
    p.add_argument("--instance", required=True, help="instance path prefix")
    p.add_argument("--format", choices=fileio.FORMATS, default="mtx")
    _add_solver_flags(p)
    p.add_argument("--out", help="report path (default <instance>.report.json)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="recompute residuals for a solution file")
    p.add_argument("--instance", required=True)
    p.add_argument("--format", choices=fileio.FORMATS, default="mtx")
    p.add_argument("--solution", required=True, help="solve report JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="run a benchmark suite file")
    p.add_argument("--suite", required=True, help="suite JSON file")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--report-dir", help="write per-seed reports here")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("exchange", help="solve an exchange instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--format", choices=fileio.FORMATS, default="mtx")
    p.add_argument("--outer-tol", type=float, default=1e-6)
    p.add_argument("--max-outer", type=int, default=100)
    p.add_argument("--verify", action="store_true",
                   help="re-solve tightly and report the true fixed-point gap")
    _add_solver_flags(p)
    p.add_argument("--out", help="trace path (default <instance>.trace.json)")
    p.set_defaults(func=cmd_exchange)
    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MarketError, ValueError) as exc:
        print(f"market-eq: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"market-eq: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
