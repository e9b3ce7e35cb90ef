"""Benchmark: compiled step kernel vs the pure-Python fallback.

Runs the same fixed-step integrations on both backends, times them, checks
they agree, and prints steps/s plus the speedup.  Usage:

    python bench/benchmark.py [--quick]
"""

import argparse
import time

import numpy as np

from hbvm import HAVE_COMPILED, RunSpec, integrate

CONFIGS = [
    # label,            problem,    formulation, solver,        k, s, h
    ("quintic 2nd blended", "quintic", "second", "blended", 8, 2, 1e-3),
    ("quintic 2nd fixed",   "quintic", "second", "fixed-point", 8, 2, 1e-3),
    ("quintic 1st blended", "quintic", "first", "blended", 8, 2, 1e-3),
    ("quintic 1st newton",  "quintic", "first", "newton", 8, 2, 1e-3),
    ("pendulum 2nd blended", "pendulum", "second", "blended", 6, 3, 1e-2),
]


def time_run(spec, repeats):
    best = np.inf
    traj = None
    for _ in range(repeats):
        start = time.perf_counter()
        traj, report = integrate(spec)
        best = min(best, time.perf_counter() - start)
        if not report.converged:
            raise RuntimeError("benchmark run failed: %s" % report.status)
    return best, traj


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true",
                        help="shorter interval, single repetition")
    parser.add_argument("--t-end", type=float, default=None)
    args = parser.parse_args()
    t_end = args.t_end if args.t_end is not None else (0.3 if args.quick else 1.0)
    repeats = 1 if args.quick else 3

    if not HAVE_COMPILED:
        print("compiled kernels are not built; showing the pure lane only")
    print("interval [0, %g], best of %d runs" % (t_end, repeats))
    print("%-22s %10s %12s %12s %9s %10s" % (
        "configuration", "steps", "pure [s]", "compiled [s]", "speedup", "max diff"))
    for label, problem, form, solver, k, s, h in CONFIGS:
        base = dict(problem=problem, formulation=form, solver=solver, k=k,
                    s=s, h=h, t_end=t_end, thin=10 ** 9)
        t_pure, traj_pure = time_run(RunSpec(backend="pure", **base), repeats)
        n_steps = len(traj_pure.step_iters)
        if HAVE_COMPILED:
            t_comp, traj_comp = time_run(RunSpec(backend="compiled", **base), repeats)
            diff = np.max(np.abs(traj_pure.states[-1] - traj_comp.states[-1]))
            print("%-22s %10d %12.4f %12.5f %8.0fx %10.1e" % (
                label, n_steps, t_pure, t_comp, t_pure / t_comp, diff))
        else:
            print("%-22s %10d %12.4f %12s %9s %10s" % (
                label, n_steps, t_pure, "-", "-", "-"))


if __name__ == "__main__":
    main()
