"""Command-line interface.

Subcommands:
  integrate    one fixed-step run, optionally writing trajectory/energy CSV
  table1       iteration-count grid over methods/formulations/solvers/h
  rho-table    blending parameter per stage count
  order-check  measured convergence order from step halvings

Exit codes: 0 success, 2 non-convergence of a requested run, 1 usage or
I/O error.
"""

import argparse
import sys

import numpy as np

from . import harness, kernels
from .problems import PROBLEM_NAMES

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this tool reserves 2 for
    # non-convergence, so remap usage problems to exit code 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write("%s: error: %s\n" % (self.prog, message))
        raise SystemExit(1)


def _add_run_flags(p, with_ks=True):
    p.add_argument("--problem", default="quintic", choices=PROBLEM_NAMES)
    if with_ks:
        p.add_argument("--k", type=int, default=8)
        p.add_argument("--s", type=int, default=2)
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--rel-tol", type=float, default=1e-12)
    p.add_argument("--abs-tol", type=float, default=1e-14)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--backend", default="auto", choices=("auto", "pure", "compiled"))


def build_parser():
    parser = _Parser(prog="hbvm", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("integrate", help="run one fixed-step integration")
    _add_run_flags(p)
    p.add_argument("--formulation", default="second", choices=("first", "second"))
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--solver", default="blended",
                   choices=("fixed-point", "newton", "blended"))
    p.add_argument("--out", default=None, help="trajectory CSV path")
    p.add_argument("--energy-out", default=None, help="energy-error CSV path")
    p.add_argument("--thin", type=int, default=1,
                   help="record every Nth step (the final step is always kept)")

    p = sub.add_parser("table1", help="iteration-count grid")
    _add_run_flags(p, with_ks=False)
    p.add_argument("--h", default="1e-3,5e-3,1e-2",
                   help="comma-separated list of step sizes")

    p = sub.add_parser("rho-table", help="blending parameter per stage count")
    p.add_argument("--s-min", type=int, default=2)
    p.add_argument("--s-max", type=int, default=5)

    p = sub.add_parser("order-check", help="measured convergence order")
    _add_run_flags(p)
    p.set_defaults(problem="pendulum", k=6, s=2, t_end=3.0, rel_tol=1e-13,
                   abs_tol=1e-15)
    p.add_argument("--solver", default="blended",
                   choices=("fixed-point", "newton", "blended"))
    p.add_argument("--h0", type=float, default=0.2)
    p.add_argument("--halvings", type=int, default=4)
    return parser


def _cmd_integrate(args):
    spec = harness.RunSpec(
        problem=args.problem, formulation=args.formulation, k=args.k, s=args.s,
        h=args.h, t_end=args.t_end, solver=args.solver, rel_tol=args.rel_tol,
        abs_tol=args.abs_tol, max_iter=args.max_iter, thin=args.thin,
        backend=args.backend)
    try:
        spec.validate()
    except ValueError as err:
        print("error: %s" % err, file=sys.stderr)
        return 1
    traj, report = integrate_or_fail(spec)
    print("problem=%s formulation=%s HBVM(%d,%d) h=%g t_end=%g solver=%s backend=%s"
          % (args.problem, args.formulation, args.k, args.s, args.h, args.t_end,
             args.solver, report.backend))
    print("steps=%d total_iterations=%d grad_evals=%d max|dH|=%.3e wall=%.3fs"
          % (len(traj.step_iters), report.total_iterations, report.grad_evals,
             report.max_abs_h_err, report.wall_time))
    try:
        if args.out:
            harness.emit_csv(traj, args.out)
            print("trajectory written to %s" % args.out)
        if args.energy_out:
            harness.emit_energy_csv(traj, args.energy_out)
            print("energy errors written to %s" % args.energy_out)
    except OSError as err:
        print("error: %s" % err, file=sys.stderr)
        return 1
    if not report.converged:
        print("no convergence at step %s (t=%.6g): %s"
              % (report.failed_step, report.failed_step * args.h, report.status))
        return 2
    print("final state: %s" % np.array2string(traj.states[-1], precision=12))
    return 0


def integrate_or_fail(spec):
    try:
        return harness.integrate(spec)
    except OSError as err:
        print("error: %s" % err, file=sys.stderr)
        raise SystemExit(1)


def _cmd_table1(args):
    try:
        h_list = tuple(float(tok) for tok in args.h.split(",") if tok)
    except ValueError:
        print("error: bad --h list %r" % args.h, file=sys.stderr)
        return 1
    if not h_list:
        print("error: empty --h list", file=sys.stderr)
        return 1
    result = harness.table1_experiment(
        h_list=h_list, t_end=args.t_end, problem=args.problem,
        rel_tol=args.rel_tol, abs_tol=args.abs_tol, max_iter=args.max_iter,
        backend=args.backend)
    print(result.format())
    return 0


def _cmd_rho_table(args):
    if args.s_min < 1 or args.s_max < args.s_min:
        print("error: need 1 <= s-min <= s-max", file=sys.stderr)
        return 1
    print("s    rho")
    for s, rho in harness.rho_table(range(args.s_min, args.s_max + 1)):
        print("%-4d %.6f" % (s, rho))
    return 0


def _cmd_order_check(args):
    try:
        result = harness.order_check(
            problem=args.problem, k=args.k, s=args.s, h0=args.h0,
            halvings=args.halvings, t_end=args.t_end, solver=args.solver,
            rel_tol=args.rel_tol, abs_tol=args.abs_tol, backend=args.backend)
    except RuntimeError as err:
        print("no convergence: %s" % err, file=sys.stderr)
        return 2
    print(result.format())
    return 0


_COMMANDS = {
    "integrate": _cmd_integrate,
    "table1": _cmd_table1,
    "rho-table": _cmd_rho_table,
    "order-check": _cmd_order_check,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = _COMMANDS[args.command](args)
    except ValueError as err:
        print("error: %s" % err, file=sys.stderr)
        code = 1
    return code


if __name__ == "__main__":
    sys.exit(main())
