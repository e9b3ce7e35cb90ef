"""Step-loop backend selection.

The fixed-step integration loop is the hot path of every experiment, so it
exists twice: a compiled extension (hbvm._kernels, Cython) covering the
built-in one-dimensional problems, and a pure-Python fallback built on the
public steppers.  The compiled lane is picked up at import time when
available; run_loop falls back per call whenever a problem or
configuration is outside what the extension handles.  Both lanes implement
the same algorithms with the same stopping rules, so results agree to
rounding; `bench/benchmark.py` compares their speed.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built: pure-Python fallback only
    _compiled = None

HAVE_COMPILED = _compiled is not None

_STATUS = {0: "ok", 1: "max-iter", 2: "diverged", 3: "non-finite", 4: "singular"}
_SOLVER_CODE = {"fixed-point": 0, "newton": 1, "blended": 2}
_POT_CODE = {"poly": 0, "pendulum": 1}


@dataclass
class StepLoopResult:
    """Outcome of a fixed-step run.

    states holds the initial state followed by one row per recorded step;
    rec_steps gives the (0-based-inclusive) step number of each row, so
    rec_steps[0] == 0.  step_iters has one entry per attempted step.
    """

    states: np.ndarray
    rec_steps: np.ndarray
    step_iters: np.ndarray
    status: str
    failed_step: Optional[int]
    grad_evals: int
    factorizations: int
    backend: str

    @property
    def converged(self):
        return self.status == "ok"


def backend_names():
    names = ["pure"]
    if HAVE_COMPILED:
        names.append("compiled")
    return tuple(names)


def record_plan(n_steps, thin):
    """1-based step numbers to record: every thin-th step plus the final
    one."""
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rec = [i for i in range(1, n_steps + 1) if i % thin == 0 or i == n_steps]
    return np.asarray(rec, dtype=np.int64)


def _compiled_supported(prob, cfg):
    return (HAVE_COMPILED and prob.potential is not None
            and prob.potential.kind in _POT_CODE and prob.m == 1
            and cfg.solver in _SOLVER_CODE)


def _potential_arrays(pot):
    from numpy.polynomial import polynomial as npoly

    kind = _POT_CODE[pot.kind]
    if pot.kind == "poly":
        uc = np.asarray(pot.coeffs, dtype=float)
        gc = npoly.polyder(uc)
        hc = npoly.polyder(gc)
    else:
        gc = np.zeros(0)
        hc = np.zeros(0)
    return kind, np.ascontiguousarray(gc), np.ascontiguousarray(hc)


def _run_compiled(prob, formulation, tab, h, n_steps, h_last, cfg, rec_steps):
    kind, gc, hc = _potential_arrays(prob.potential)
    states = np.zeros((1 + len(rec_steps), 2))
    step_iters = np.zeros(max(n_steps, 1), dtype=np.int64)
    carr = np.ascontiguousarray(tab.quad.c)
    barr = np.ascontiguousarray(tab.quad.b)
    parr = np.ascontiguousarray(tab.P)
    common = (kind, gc, hc, carr, barr, parr)
    solver = _SOLVER_CODE[cfg.solver]
    ctrl = (float(h), int(n_steps), float(h_last), solver, cfg.rel_tol,
            cfg.abs_tol, cfg.max_iter, cfg.div_window)
    if formulation == "second":
        q0, p0 = float(prob.q0[0]), float(prob.p0[0])
        states[0] = (q0, p0)
        n_done, code, n_rec, gev, fac = _compiled.run_loop_second(
            *common,
            np.ascontiguousarray(tab.Iint_X),
            np.ascontiguousarray(tab.X_sq),
            np.ascontiguousarray(tab.X_inv_sq),
            np.ascontiguousarray(tab.A.T @ tab.quad.b),
            float(tab.rho), q0, p0, *ctrl, rec_steps, states, step_iters)
    else:
        states[0] = prob.y0
        n_done, code, n_rec, gev, fac = _compiled.run_loop_first(
            *common,
            np.ascontiguousarray(tab.Iint),
            np.ascontiguousarray(tab.X),
            np.ascontiguousarray(tab.X_inv),
            float(tab.rho), float(prob.y0[0]), float(prob.y0[1]),
            *ctrl, rec_steps, states, step_iters)
    status = _STATUS[code]
    failed = None if status == "ok" else n_done - 1
    return StepLoopResult(
        states=states[:n_rec], rec_steps=np.concatenate([[0], rec_steps[: n_rec - 1]]),
        step_iters=step_iters[:n_done], status=status, failed_step=failed,
        grad_evals=gev, factorizations=fac, backend="compiled")


def run_loop(prob, formulation, tab, h, n_steps, h_last, cfg, thin=1, backend="auto"):
    """Run a fixed-step integration on the selected backend.

    backend is "auto" (compiled when capable, else pure), "pure" or
    "compiled" (raises if the extension is missing or cannot handle the
    problem).
    """
    if backend not in ("auto", "pure", "compiled"):
        raise ValueError("unknown backend %r" % backend)
    rec_steps = record_plan(n_steps, thin)
    supported = _compiled_supported(prob, cfg)
    if backend == "compiled" and not supported:
        raise RuntimeError("compiled backend unavailable for this problem/configuration")
    if backend != "pure" and supported:
        return _run_compiled(prob, formulation, tab, h, n_steps, h_last, cfg, rec_steps)
    states, n_rec, iters, status, failed, gev, fac = _kernels_py.run_loop(
        prob, formulation, tab, h, n_steps, h_last, cfg, rec_steps)
    return StepLoopResult(
        states=states[:n_rec], rec_steps=np.concatenate([[0], rec_steps[: n_rec - 1]]),
        step_iters=iters, status=status, failed_step=failed,
        grad_evals=gev, factorizations=fac, backend=_kernels_py.BACKEND_NAME)
