"""Command line interface: ``mmot {generate,solve,compare,oracle}``.

Exit codes: 0 success, 1 error (bad input, refused instance), 2 incomplete
(iteration cap reached, or a flagged row in ``compare``).
"""

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .baselines import lp_solve
from .errors import MOTError
from .io import RunRecord, generate_instance, read_instance, write_instance, write_plan
from .pdaam import solve_mot_full

EXIT_OK, EXIT_ERROR, EXIT_INCOMPLETE = 0, 1, 2

CSV_COLUMNS = ["seed", "m", "n", "eps", "algorithm", "iterations", "wall_ms",
               "final_gap", "final_violation", "status"]
DEFAULT_EPS = "0.25,0.1,0.05,0.025,0.0125"

log = logging.getLogger("mmot")


def _set_threads(threads):
    # kernels are serial; only touch numba's thread pool when asked for more than one
    if threads and threads > 1:
        try:
            import numba

            numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        except ImportError:
            pass


def run_record(problem, eps, algorithm, max_iter=None, trace=False):
    res = solve_mot_full(problem, eps, algorithm, max_iter=max_iter)
    rep = res.report
    return res, RunRecord(
        algorithm=algorithm,
        eps=eps,
        iterations=rep.iterations,
        wall_ms=rep.wall_time * 1e3,
        final_gap=rep.final_gap,
        final_violation=rep.final_violation,
        primal_cost=res.cost,
        status=rep.status,
        certificate=res.certificate.as_dict() if res.certificate is not None else None,
        trace=rep.trace_rows() if trace else None,
    )


def cmd_generate(args):
    inst = generate_instance(args.m, args.n, args.seed)
    write_instance(args.output, inst)
    print(args.output)
    return EXIT_OK


def cmd_solve(args):
    if not args.eps > 0:
        print("error: eps must be positive", file=sys.stderr)
        return EXIT_ERROR
    _set_threads(args.threads)
    problem = read_instance(args.instance).to_problem()
    res, record = run_record(problem, args.eps, args.algorithm, args.max_iters, args.trace)
    text = record.to_json()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.emit_plan:
        base = Path(args.output or args.instance)
        write_plan(base.with_name(base.stem + ".plan"), res.plan)
    return EXIT_OK if res.report.complete else EXIT_INCOMPLETE


def _compare_cell(cell):
    m, n, seed, eps, algorithm, max_iter = cell
    problem = generate_instance(m, n, seed).to_problem()
    row = {"seed": seed, "m": m, "n": n, "eps": eps, "algorithm": algorithm}
    try:
        _, rec = run_record(problem, eps, algorithm, max_iter)
    except (MOTError, FloatingPointError) as exc:
        row.update(iterations=-1, wall_ms=0.0, final_gap=math.nan, final_violation=math.nan,
                   status=f"error: {exc}")
        return row
    row.update(iterations=rec.iterations, wall_ms=f"{rec.wall_ms:.3f}",
               final_gap=repr(rec.final_gap), final_violation=repr(rec.final_violation),
               status="ok" if rec.status == "converged" else rec.status)
    return row


def _parse_floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _parse_seeds(text):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def cmd_compare(args):
    eps_list = _parse_floats(args.eps)
    if not eps_list or any(not e > 0 for e in eps_list):
        print("error: eps must be positive", file=sys.stderr)
        return EXIT_ERROR
    seeds = _parse_seeds(args.seeds)
    algorithms = [args.algorithm] if args.algorithm else ["pdaam", "sinkhorn"]
    cells = [(args.m, args.n, s, e, a, args.max_iters)
             for s in seeds for e in eps_list for a in algorithms]
    if args.threads and args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_compare_cell, cells))
    else:
        rows = [_compare_cell(c) for c in cells]
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_INCOMPLETE


def cmd_oracle(args):
    problem = read_instance(args.instance).to_problem()
    sol = lp_solve(problem)
    if sol.status != "optimal":
        print(f"error: LP oracle finished with status {sol.status}", file=sys.stderr)
        return EXIT_ERROR
    print(repr(sol.optimal_value))
    base = Path(args.plan) if args.plan else Path(args.instance).with_suffix(".oracle")
    write_plan(base, sol.plan)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mmot", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded random instance")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="eps-approximate MOT plan for an instance file")
    p.add_argument("instance")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--algorithm", choices=["pdaam", "sinkhorn"], default="pdaam")
    p.add_argument("-o", "--output", help="RunRecord JSON path (default: stdout)")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--trace", action="store_true", help="include the per-iteration trace")
    p.add_argument("--emit-plan", action="store_true", help="write <output>.plan.{bin,json}")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="PD-AAM vs greedy Sinkhorn on seeded instances (CSV)")
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--n", type=int, default=15)
    p.add_argument("--eps", default=DEFAULT_EPS, help="comma-separated accuracies")
    p.add_argument("--seeds", default="0-4", help="e.g. 0,1,2 or 0-4")
    p.add_argument("--seed", dest="seeds", help=argparse.SUPPRESS)
    p.add_argument("--algorithm", choices=["pdaam", "sinkhorn"], default=None,
                   help="run only one algorithm (default: both)")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--threads", type=int, default=1, help="concurrent cells")
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle", help="exact LP optimum for a small instance")
    p.add_argument("instance")
    p.add_argument("--plan", help="plan output base path (default: <instance>.oracle)")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MOTError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
