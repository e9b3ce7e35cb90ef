"""Experiment driver: fixed-step integration runs, iteration-count sweeps,
convergence-order measurement and CSV emission.

A run is described by a RunSpec and produces a Trajectory (times, states,
energy errors, per-step iteration counts) plus a RunReport (totals and
convergence status).  Runs are single-threaded and deterministic: the same
spec always yields bit-identical trajectories and reports (wall time
aside), whichever backend executes the loop.
"""

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .coefficients import build_tableau
from .problems import (HamiltonianProblem, SeparableProblem, as_first_order,
                       get_problem)
from .stepper_general import SOLVER_KINDS, SolverConfig

__all__ = [
    "RunSpec",
    "Trajectory",
    "RunReport",
    "integrate",
    "Table1Result",
    "table1_experiment",
    "OrderCheckResult",
    "order_check",
    "rho_table",
    "emit_csv",
    "emit_energy_csv",
]

FORMULATIONS = ("first", "second")


@dataclass(frozen=True)
class RunSpec:
    """Everything defining one integration run."""

    problem: object  # built-in name or a problem instance
    formulation: str = "second"
    k: int = 8
    s: int = 2
    h: float = 1e-3
    t_end: float = 10.0
    solver: str = "blended"
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_iter: int = 100
    thin: int = 1
    backend: str = "auto"

    def config(self):
        return SolverConfig(solver=self.solver, rel_tol=self.rel_tol,
                            abs_tol=self.abs_tol, max_iter=self.max_iter)

    def validate(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError("formulation must be one of %s" % (FORMULATIONS,))
        if self.solver not in SOLVER_KINDS:
            raise ValueError("solver must be one of %s" % (SOLVER_KINDS,))
        if self.h <= 0.0:
            raise ValueError("step size must be positive")
        if self.t_end < 0.0:
            raise ValueError("t_end must be nonnegative")
        if self.k < self.s:
            raise ValueError("need k >= s")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")


@dataclass
class Trajectory:
    """Recorded samples of one run: times with uniform spacing h (the last
    step may be clipped to land exactly on t_end), the states (q then p
    components), the energy error H(y_n) - H(y_0) per sample and the
    iteration count of every attempted step."""

    times: np.ndarray
    states: np.ndarray
    h_err: np.ndarray
    step_iters: np.ndarray
    m: int


@dataclass
class RunReport:
    converged: bool
    status: str
    failed_step: Optional[int]
    total_iterations: int
    max_abs_h_err: float
    grad_evals: int
    factorizations: int
    backend: str
    iter_histogram: tuple = ()
    wall_time: float = field(default=0.0, compare=False)


def _resolve_problem(problem):
    if isinstance(problem, str):
        return get_problem(problem)
    return problem


def _plan_steps(h, t_end):
    """Number of steps plus the clipped final step size (0 when t_end is a
    whole number of steps)."""
    n_full = int(np.floor(t_end / h + 1e-9))
    rem = t_end - n_full * h
    if rem > 1e-9 * h:
        return n_full + 1, rem
    return n_full, 0.0


def integrate(spec):
    """Run one fixed-step integration.

    On a step failure the run stops, the report carries the non-convergence
    status and the partial trajectory up to the last completed step is
    returned.
    """
    spec.validate()
    prob = _resolve_problem(spec.problem)
    separable = isinstance(prob, SeparableProblem)
    if spec.formulation == "second":
        if not separable:
            raise ValueError("the second-order formulation needs a separable problem")
        run_prob = prob
    else:
        run_prob = as_first_order(prob) if separable else prob
        if not isinstance(run_prob, HamiltonianProblem):
            raise ValueError("unsupported problem type %r" % type(prob).__name__)

    tab = build_tableau(spec.k, spec.s)
    cfg = spec.config()
    n_steps, h_last = _plan_steps(spec.h, spec.t_end)

    start = time.perf_counter()
    res = kernels.run_loop(run_prob, spec.formulation, tab, spec.h, n_steps,
                           h_last, cfg, thin=spec.thin, backend=spec.backend)
    wall = time.perf_counter() - start

    times = res.rec_steps * spec.h
    if len(times) and res.rec_steps[-1] == n_steps and res.failed_step is None:
        times[-1] = spec.t_end
    m = run_prob.m
    if spec.formulation == "second":
        h_vals = prob.eval_H(res.states[:, :m], res.states[:, m:])
    else:
        h_vals = run_prob.eval_H(res.states)
    h_err = h_vals - h_vals[0]

    traj = Trajectory(times=times, states=res.states, h_err=h_err,
                      step_iters=res.step_iters, m=m)
    hist = np.bincount(res.step_iters) if res.step_iters.size else np.zeros(1, dtype=int)
    report = RunReport(
        converged=res.converged, status=res.status, failed_step=res.failed_step,
        total_iterations=int(res.step_iters.sum()),
        max_abs_h_err=float(np.max(np.abs(h_err))) if h_err.size else 0.0,
        grad_evals=res.grad_evals, factorizations=res.factorizations,
        backend=res.backend, iter_histogram=tuple(int(v) for v in hist),
        wall_time=wall)
    return traj, report


# ----------------------------------------------------------------------
# Iteration-count sweep in the layout of the benchmark table
# ----------------------------------------------------------------------

DEFA_METHODS = (("GAUSS2", 2, 2), ("HBVM(8,2)", 8, 2))


@dataclass
class Table1Result:
    """Grid of total iteration counts; a None count marks no convergence."""

    problem: str
    t_end: float
    h_list: tuple
    methods: tuple
    formulations: tuple
    solvers: tuple
    cells: dict  # (method, formulation, solver, h) -> (converged, total)

    def cell(self, method, formulation, solver, h):
        return self.cells[(method, formulation, solver, h)]

    def format(self):
        lines = []
        lines.append("total iterations on %r over [0, %g]  (-- = no convergence)"
                     % (self.problem, self.t_end))
        head1 = "%-10s" % "h"
        head2 = "%-10s" % ""
        for method, _, _ in self.methods:
            for form in self.formulations:
                for solver in self.solvers:
                    head1 += "%14s" % method
                    head2 += "%14s" % ("%s/%s" % (form[:4], "fix" if solver.startswith("fix") else "blnd"))
        lines.append(head1)
        lines.append(head2)
        for h in self.h_list:
            row = "%-10g" % h
            for method, _, _ in self.methods:
                for form in self.formulations:
                    for solver in self.solvers:
                        conv, tot = self.cells[(method, form, solver, h)]
                        row += "%14s" % (str(tot) if conv else "--")
            lines.append(row)
        return "\n".join(lines)


def table1_experiment(h_list=(1e-3, 5e-3, 1e-2), t_end=10.0, problem="quintic",
                      methods=DEFA_METHODS, formulations=("second", "first"),
                      solvers=("blended", "fixed-point"), rel_tol=1e-12,
                      abs_tol=1e-14, max_iter=100, backend="auto"):
    """Total-iteration grid over methods x formulations x solvers x h.

    Non-convergent runs are recorded, not raised, mirroring the dashes of
    the benchmark table this reproduces at desk scale.
    """
    cells = {}
    for method, k, s in methods:
        for form in formulations:
            for solver in solvers:
                for h in h_list:
                    spec = RunSpec(problem=problem, formulation=form, k=k, s=s,
                                   h=h, t_end=t_end, solver=solver,
                                   rel_tol=rel_tol, abs_tol=abs_tol,
                                   max_iter=max_iter, thin=10 ** 9,
                                   backend=backend)
                    _, report = integrate(spec)
                    cells[(method, form, solver, h)] = (report.converged,
                                                        report.total_iterations)
    return Table1Result(problem=str(problem), t_end=t_end, h_list=tuple(h_list),
                        methods=tuple(methods), formulations=tuple(formulations),
                        solvers=tuple(solvers), cells=cells)


# ----------------------------------------------------------------------
# Convergence-order measurement
# ----------------------------------------------------------------------


@dataclass
class OrderCheckResult:
    k: int
    s: int
    h_list: np.ndarray
    diffs: np.ndarray
    slope: float

    def format(self):
        lines = ["order check for (k, s) = (%d, %d): measured slope %.3f "
                 "(expected %d)" % (self.k, self.s, self.slope, 2 * self.s)]
        for h, d in zip(self.h_list[:-1], self.diffs):
            lines.append("  h = %-8g |y(h) - y(h/2)| = %.3e" % (h, d))
        return "\n".join(lines)


def order_check(problem="pendulum", k=6, s=2, h0=0.2, halvings=4, t_end=3.0,
                solver="blended", rel_tol=1e-13, abs_tol=1e-15, backend="auto"):
    """Measured convergence order from successive step halvings.

    Runs the same interval at h0, h0/2, ..., takes the end-state difference
    between consecutive resolutions (which is dominated by the coarser
    error) and fits the log-log slope.  The one-step family built here has
    order 2s for every k >= s, so the slope should sit near 2s.
    """
    hs = np.array([h0 / 2 ** i for i in range(halvings + 1)])
    finals = []
    for h in hs:
        spec = RunSpec(problem=problem, formulation="second", k=k, s=s, h=h,
                       t_end=t_end, solver=solver, rel_tol=rel_tol,
                       abs_tol=abs_tol, thin=10 ** 9, backend=backend)
        traj, report = integrate(spec)
        if not report.converged:
            raise RuntimeError("order check run failed at h=%g (%s)" % (h, report.status))
        finals.append(traj.states[-1])
    diffs = np.array([np.max(np.abs(finals[i] - finals[i + 1]))
                      for i in range(halvings)])
    slope = float(np.polyfit(np.log(hs[:halvings]), np.log(diffs), 1)[0])
    return OrderCheckResult(k=k, s=s, h_list=hs, diffs=diffs, slope=slope)


def rho_table(s_values=(2, 3, 4, 5)):
    """(s, rho) pairs of the blending parameter."""
    from .coefficients import rho_opt

    return [(s, rho_opt(s)) for s in s_values]


# ----------------------------------------------------------------------
# CSV output
# ----------------------------------------------------------------------


def _fmt(x):
    return "%.17g" % x


def emit_csv(traj, path):
    """Phase-portrait CSV: t, q..., p..., printed with 17 significant
    digits so values round-trip exactly."""
    m = traj.m
    cols = ["t"] + ["q%d" % (i + 1) for i in range(m)] + ["p%d" % (i + 1) for i in range(m)]
    try:
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for t, row in zip(traj.times, traj.states):
                fh.write(",".join([_fmt(t)] + [_fmt(v) for v in row]) + "\n")
    except OSError as err:
        raise OSError("cannot write trajectory CSV %r: %s" % (path, err)) from err


def emit_energy_csv(traj, path):
    """Energy-error CSV: t, H_error."""
    try:
        with open(path, "w") as fh:
            fh.write("t,H_error\n")
            for t, e in zip(traj.times, traj.h_err):
                fh.write("%s,%s\n" % (_fmt(t), _fmt(e)))
    except OSError as err:
        raise OSError("cannot write energy CSV %r: %s" % (path, err)) from err
