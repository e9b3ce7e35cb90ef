"""Pure-Python step loop.

Reference implementation of the fixed-step integration kernel, built
directly on the public steppers.  The compiled extension provides the same
entry point for built-in one-dimensional problems; this module is both the
fallback when the extension is absent and the baseline the extension is
benchmarked and tested against.
"""

import numpy as np

from . import stepper_general as sg
from . import stepper_separable as ssep

BACKEND_NAME = "pure"


def run_loop(prob, formulation, tab, h, n_steps, h_last, cfg, rec_steps):
    """Advance n_steps fixed steps, recording the state after the step
    numbers listed in rec_steps (1-based, ascending).

    Returns (states, n_rec, step_iters, status, failed_step, grad_evals,
    factorizations); states row 0 is the initial state, failed_step is the
    0-based index of the failing step or None.
    """
    second = formulation == "second"
    if second:
        q = prob.q0.copy()
        p = prob.p0.copy()
        state = np.concatenate([q, p])
    else:
        state = prob.y0.copy()
    dim = state.size
    states = np.empty((1 + len(rec_steps), dim))
    states[0] = state
    step_iters = np.zeros(n_steps, dtype=np.int64)
    grad_evals = 0
    factorizations = 0
    ridx = 0
    status, failed = "ok", None
    for i in range(n_steps):
        hi = h_last if (h_last > 0.0 and i == n_steps - 1) else h
        if second:
            out, stats = ssep.step_qp(q, p, hi, tab, prob, cfg)
        else:
            out, stats = sg.step(state, hi, tab, prob, cfg)
        step_iters[i] = stats.iterations
        grad_evals += stats.grad_evals
        factorizations += stats.factorizations
        if out is None:
            status, failed = stats.status, i
            break
        if second:
            q, p = out
            state = np.concatenate([q, p])
        else:
            state = out
        if ridx < len(rec_steps) and rec_steps[ridx] == i + 1:
            states[1 + ridx] = state
            ridx += 1
    n_done = n_steps if failed is None else failed + 1
    return states, 1 + ridx, step_iters[:n_done], status, failed, grad_evals, factorizations
