"""One HBVM(k, s) step for a separable problem in second-order form.

For H(q, p) = p.p/2 - U(q) the k-stage system can be written in the
position variables only.  The unknown gamma has s blocks of dimension m,
stage positions are

    Q_i = q0 + h c_i p0 + h^2 * sum_j (Iint @ X)[i, j] * gamma_j,

and the defect is F(gamma) = gamma - P^T diag(b) [grad_U(Q_i)]_i.  This is
the first-order problem under the formal substitutions h -> h^2,
X -> X^2, rho -> rho^2 and state dimension 2m -> m, so the three solvers
are the same skeletons with those replacements (G0 = hess_U(q0)).

The update reuses the k stage gradients from the final defect evaluation:

    q1 = q0 + h p0 + h^2 * (A^T b . grads),    p1 = p0 + h * (b . grads).
"""

import numpy as np

from .densecore import lu_solve
from .stepper_general import (
    NonFiniteStageError,
    StepStats,
    _Monitor,
    _finish,
    blended_step_matrices,
    newton_matrix,
    safe_lu,
)

__all__ = [
    "residual_q",
    "advance_qp",
    "solve_fixed_point_q",
    "solve_newton_direct_q",
    "solve_blended_q",
    "step_qp",
]


def _stage_grads(gamma, q0, p0, h, tab, prob):
    """Stage positions and their gradients; the k gradient rows are the
    quantities every other formula consumes."""
    stages = q0 + (h * tab.quad.c)[:, None] * p0 + (h * h) * (tab.Iint_X @ gamma)
    with np.errstate(over="ignore", invalid="ignore"):
        grads = np.asarray(prob.grad_U(stages), dtype=float)
    if not np.all(np.isfinite(grads)):
        bad = int(np.nonzero(~np.all(np.isfinite(grads), axis=-1))[0][0])
        raise NonFiniteStageError(bad)
    return stages, grads


def _defect(gamma, grads, tab):
    return gamma - tab.P.T @ (tab.quad.b[:, None] * grads)


def residual_q(gamma, q0, p0, h, tab, prob):
    """Defect of the position-space coefficient equations."""
    _, grads = _stage_grads(gamma, q0, p0, h, tab, prob)
    return _defect(gamma, grads, tab)


def advance_qp(q0, p0, h, tab, grads):
    """(q1, p1) from the k stage gradients already computed by the solver;
    no further gradient evaluations are needed."""
    wq = tab.A.T @ tab.quad.b
    q1 = q0 + h * p0 + (h * h) * (wq @ grads)
    p1 = p0 + h * (tab.quad.b @ grads)
    return q1, p1


def _iterate(q0, p0, h, tab, prob, cfg, make_delta):
    """Common sweep loop; make_delta maps the defect to the update."""
    gamma = np.zeros((tab.s, q0.size))
    stats, mon = StepStats(), _Monitor(cfg)
    grads = None
    state = "max-iter"
    it = 0
    for it in range(1, cfg.max_iter + 1):
        try:
            _, grads = _stage_grads(gamma, q0, p0, h, tab, prob)
        except NonFiniteStageError as err:
            stats.failure_stage = err.stage
            state = "non-finite"
            break
        stats.grad_evals += tab.k
        delta = make_delta(_defect(gamma, grads, tab))
        gamma = gamma + delta
        state = mon.update(delta, gamma)
        if state != "continue":
            break
        state = "max-iter"
    return gamma, grads, _finish(stats, mon, state, it)


def _solve_impl(q0, p0, h, tab, prob, cfg):
    """Dispatch on cfg.solver; returns (gamma, cached stage grads, stats)."""
    if cfg.solver == "fixed-point":
        return _iterate(q0, p0, h, tab, prob, cfg, lambda f: -f)

    g0 = np.asarray(prob.hess_U(q0), dtype=float)
    h2 = h * h
    if cfg.solver == "newton":
        fac = safe_lu(newton_matrix(h2, tab.X_sq, g0))
        if fac.singular:
            return np.zeros((tab.s, q0.size)), None, StepStats(status="singular", factorizations=1)

        def make_delta(f):
            return lu_solve(fac, -f.reshape(-1)).reshape(f.shape)

    else:  # blended
        rho2 = tab.rho * tab.rho
        theta = blended_step_matrices(h2, rho2, g0)
        if theta.singular:
            return np.zeros((tab.s, q0.size)), None, StepStats(status="singular", factorizations=1)

        def make_delta(f):
            eta = -f
            eta1 = rho2 * (tab.X_inv_sq @ eta)
            return theta.apply(eta1 + theta.apply(eta - eta1))

    gamma, grads, stats = _iterate(q0, p0, h, tab, prob, cfg, make_delta)
    stats.factorizations = 1
    return gamma, grads, stats


def solve_fixed_point_q(q0, p0, h, tab, prob, cfg):
    from dataclasses import replace
    gamma, _, stats = _iterate(q0, p0, h, tab, prob, replace(cfg, solver="fixed-point"),
                               lambda f: -f)
    return gamma, stats


def solve_newton_direct_q(q0, p0, h, tab, prob, cfg):
    from dataclasses import replace
    gamma, _, stats = _solve_impl(q0, p0, h, tab, prob, replace(cfg, solver="newton"))
    return gamma, stats


def solve_blended_q(q0, p0, h, tab, prob, cfg):
    from dataclasses import replace
    gamma, _, stats = _solve_impl(q0, p0, h, tab, prob, replace(cfg, solver="blended"))
    return gamma, stats


def step_qp(q0, p0, h, tab, prob, cfg):
    """One second-order step.  Returns ((q1, p1), stats) with the state
    pair None when the solver failed."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    _, grads, stats = _solve_impl(q0, p0, h, tab, prob, cfg)
    if not stats.converged:
        return None, stats
    return advance_qp(q0, p0, h, tab, grads), stats
