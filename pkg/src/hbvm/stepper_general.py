"""One HBVM(k, s) step for a canonical Hamiltonian problem.

The k-stage nonlinear system is solved in its reduced form: the unknown is
the block vector gamma of s coefficients (each in R^{2m}) expanding the
derivative of the underlying degree-s polynomial in the orthonormal basis.
Stage values are reconstructed as

    Y_i = y0 + h * sum_j Iint[i, j] * gamma_j,

the defect of the coefficient equations is

    F(gamma) = gamma - P^T diag(b) [J grad_H(Y_i)]_i,

and the step update is simply y1 = y0 + h * gamma_0 (only the constant
basis member has nonzero mean).

Three interchangeable solvers drive F(gamma) = 0:

* fixed-point:     gamma <- gamma - F(gamma)
* newton-direct:   the simplified Newton iteration; the (s*2m)^2 matrix
                   I - h X kron G0, G0 = J hess_H(y0), is factored once
                   per step
* blended:         same Jacobian approximation, but solved by blending two
                   equivalent formulations so that only the 2m x 2m matrix
                   I - rho*h*G0 is ever factored.

All solvers stop when the last applied increment satisfies
||delta||_inf <= abs_tol + rel_tol * ||gamma||_inf, and report failure on
a divergence window, non-finite values, or the iteration cap.  One
"iteration" always means one evaluation of F.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .densecore import LUFactor, lu_factor, lu_solve, kron_apply, kron_scalar_apply

__all__ = [
    "SolverConfig",
    "StepStats",
    "NonFiniteStageError",
    "SOLVER_KINDS",
    "residual",
    "advance",
    "g0_matrix",
    "newton_matrix",
    "BlendedTheta",
    "blended_step_matrices",
    "blended_sweep",
    "solve_fixed_point",
    "solve_newton_direct",
    "solve_blended",
    "step",
]

SOLVER_KINDS = ("fixed-point", "newton", "blended")


@dataclass(frozen=True)
class SolverConfig:
    """Solver selection and stopping control shared by all steppers."""

    solver: str = "blended"
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_iter: int = 100
    div_window: int = 5

    def __post_init__(self):
        if self.solver not in SOLVER_KINDS:
            raise ValueError("unknown solver %r (choose from %s)" % (self.solver, SOLVER_KINDS))
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.div_window < 1:
            raise ValueError("div_window must be at least 1")


@dataclass
class StepStats:
    """Per-step iteration accounting.

    resid_norm is the stopping norm: the inf-norm of the last applied
    increment (for the fixed-point solver this equals ||F||_inf).
    """

    iterations: int = 0
    converged: bool = False
    status: str = "pending"
    resid_norm: float = np.inf
    grad_evals: int = 0
    factorizations: int = 0
    failure_stage: Optional[int] = None


class NonFiniteStageError(Exception):
    """A gradient evaluation produced a non-finite value at some stage."""

    def __init__(self, stage):
        super().__init__("non-finite gradient at stage %d" % stage)
        self.stage = stage


def _apply_structure(g, m):
    """Blockwise J g for rows g = grad_H(Y_i): (dH/dq, dH/dp) -> (dH/dp, -dH/dq)."""
    return np.concatenate([g[..., m:], -g[..., :m]], axis=-1)


def residual(gamma, y0, h, tab, prob):
    """Defect F(gamma) of the reduced coefficient equations.

    Reconstructs all k stages, evaluates grad_H there (one vectorized
    call), applies the structure matrix blockwise and projects back onto
    the s basis members.  Raises NonFiniteStageError with the offending
    stage index if an evaluation blows up.
    """
    stages = y0 + h * (tab.Iint @ gamma)
    with np.errstate(over="ignore", invalid="ignore"):
        grads = np.asarray(prob.grad_H(stages), dtype=float)
    if not np.all(np.isfinite(grads)):
        bad = int(np.nonzero(~np.all(np.isfinite(grads), axis=-1))[0][0])
        raise NonFiniteStageError(bad)
    field = _apply_structure(grads, prob.m)
    return gamma - tab.P.T @ (tab.quad.b[:, None] * field)


def advance(y0, h, gamma):
    """State update: only the mean of the first basis member survives the
    integration over the step, so y1 = y0 + h * gamma_0."""
    return y0 + h * gamma[0]


def g0_matrix(prob, y0):
    """Frozen Jacobian of the right-hand side at y0: J hess_H(y0)."""
    hess = np.asarray(prob.hess_H(y0), dtype=float)
    m = prob.m
    return np.concatenate([hess[m:, :], -hess[:m, :]], axis=0)


def newton_matrix(h, x, g0):
    """Iteration matrix I - h * (x kron g0) of the simplified Newton solve."""
    n = x.shape[0] * g0.shape[0]
    return np.eye(n) - h * np.kron(x, g0)


def safe_lu(mat):
    """lu_factor that degrades a non-finite matrix (e.g. from a blown-up
    frozen Jacobian) to a singular-flagged factor instead of raising, so
    step drivers can report the failure."""
    mat = np.asarray(mat, dtype=float)
    if not np.all(np.isfinite(mat)):
        return LUFactor(np.zeros_like(mat), np.arange(mat.shape[0]), True)
    return lu_factor(mat)


class BlendedTheta:
    """Blockwise weight operator of the blended solver.

    Holds the LU factorization of sigma = I - rho*h*G0 (state-space size);
    apply() solves sigma z = v for every block of a block vector, i.e.
    multiplies by the inverse the formulation is written with.
    """

    def __init__(self, rho, g0, factor):
        self.rho = rho
        self.G0 = g0
        self.factor = factor
        self.singular = factor.singular

    def apply(self, v):
        return lu_solve(self.factor, v.T).T


def blended_step_matrices(h, rho, g0):
    """Factor the single state-space matrix I - rho*h*G0 the blended
    iteration needs; the returned operator is flagged singular instead of
    raising, so step drivers can report the failure."""
    g0 = np.asarray(g0, dtype=float)
    sigma = np.eye(g0.shape[0]) - (rho * h) * g0
    return BlendedTheta(rho, g0, safe_lu(sigma))


def blended_sweep(delta, eta, eta1, h, tab, theta):
    """One sweep of the blended iteration on the Newton linear system.

    Blends the two equivalent formulations
        (I - h X kron G0) delta = eta
        rho (X^-1 kron I - h I kron G0) delta = eta1
    with weights theta / (I - theta) and applies the damped update
    delta <- delta - theta T(delta).  Only blockwise products with X,
    X^-1, G0 and two theta-applications are used; no (s*2m)^2 matrix is
    ever formed.
    """
    rho, g0 = theta.rho, theta.G0
    r1 = delta - h * kron_apply(tab.X, g0, delta) - eta
    r2 = rho * (kron_scalar_apply(tab.X_inv, delta) - h * (delta @ g0.T)) - eta1
    t = r2 + theta.apply(r1 - r2)
    return delta - theta.apply(t)


class _Monitor:
    """Shared stopping/divergence bookkeeping for all solver loops."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.prev = np.inf
        self.growth = 0
        self.norm = np.inf

    def update(self, delta, gamma):
        """Returns "converged", "diverged", "non-finite" or "continue"."""
        self.norm = float(np.max(np.abs(delta))) if delta.size else 0.0
        if not np.isfinite(self.norm):
            return "non-finite"
        gnorm = float(np.max(np.abs(gamma))) if gamma.size else 0.0
        if self.norm <= self.cfg.abs_tol + self.cfg.rel_tol * gnorm:
            return "converged"
        if self.norm > self.prev:
            self.growth += 1
            if self.growth >= self.cfg.div_window:
                return "diverged"
        else:
            self.growth = 0
        self.prev = self.norm
        return "continue"


def _finish(stats, monitor, state, iterations):
    stats.iterations = iterations
    stats.resid_norm = monitor.norm
    stats.converged = state == "converged"
    stats.status = "converged" if stats.converged else (
        state if state in ("diverged", "non-finite") else "max-iter")
    return stats


def solve_fixed_point(y0, h, tab, prob, cfg):
    """Direct substitution iteration gamma <- gamma - F(gamma)."""
    gamma = np.zeros((tab.s, y0.size))
    stats, mon = StepStats(), _Monitor(cfg)
    state = "max-iter"
    it = 0
    for it in range(1, cfg.max_iter + 1):
        try:
            f = residual(gamma, y0, h, tab, prob)
        except NonFiniteStageError as err:
            stats.failure_stage = err.stage
            state = "non-finite"
            break
        stats.grad_evals += tab.k
        delta = -f
        gamma = gamma + delta
        state = mon.update(delta, gamma)
        if state != "continue":
            break
        state = "max-iter"
    return gamma, _finish(stats, mon, state, it)


def solve_newton_direct(y0, h, tab, prob, cfg):
    """Simplified Newton with the full (s*2m)^2 matrix factored once per
    step.  The dense solve makes this the reference the blended solver is
    checked against."""
    gamma = np.zeros((tab.s, y0.size))
    stats, mon = StepStats(), _Monitor(cfg)
    fac = safe_lu(newton_matrix(h, tab.X, g0_matrix(prob, y0)))
    stats.factorizations = 1
    if fac.singular:
        stats.status = "singular"
        return gamma, stats
    state = "max-iter"
    it = 0
    for it in range(1, cfg.max_iter + 1):
        try:
            f = residual(gamma, y0, h, tab, prob)
        except NonFiniteStageError as err:
            stats.failure_stage = err.stage
            state = "non-finite"
            break
        stats.grad_evals += tab.k
        delta = lu_solve(fac, -f.reshape(-1)).reshape(gamma.shape)
        gamma = gamma + delta
        state = mon.update(delta, gamma)
        if state != "continue":
            break
        state = "max-iter"
    return gamma, _finish(stats, mon, state, it)


def solve_blended(y0, h, tab, prob, cfg):
    """Nonlinear blended iteration.

    Each outer sweep refreshes eta = -F(gamma) and eta1 = rho X^-1 eta and
    applies one blended update started from delta = 0, which collapses to
    delta = theta [eta1 + theta (eta - eta1)]: two blockwise solves with
    the single factored matrix I - rho*h*G0.
    """
    gamma = np.zeros((tab.s, y0.size))
    stats, mon = StepStats(), _Monitor(cfg)
    theta = blended_step_matrices(h, tab.rho, g0_matrix(prob, y0))
    stats.factorizations = 1
    if theta.singular:
        stats.status = "singular"
        return gamma, stats
    state = "max-iter"
    it = 0
    for it in range(1, cfg.max_iter + 1):
        try:
            f = residual(gamma, y0, h, tab, prob)
        except NonFiniteStageError as err:
            stats.failure_stage = err.stage
            state = "non-finite"
            break
        stats.grad_evals += tab.k
        eta = -f
        eta1 = tab.rho * (tab.X_inv @ eta)
        delta = theta.apply(eta1 + theta.apply(eta - eta1))
        gamma = gamma + delta
        state = mon.update(delta, gamma)
        if state != "continue":
            break
        state = "max-iter"
    return gamma, _finish(stats, mon, state, it)


_SOLVERS = {
    "fixed-point": solve_fixed_point,
    "newton": solve_newton_direct,
    "blended": solve_blended,
}


def step(y0, h, tab, prob, cfg):
    """One step from y0: solve for gamma with the configured solver, then
    advance.  Returns (y1, stats); y1 is None when the solver failed."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    y0 = np.asarray(y0, dtype=float)
    gamma, stats = _SOLVERS[cfg.solver](y0, h, tab, prob, cfg)
    if not stats.converged:
        return None, stats
    return advance(y0, h, gamma), stats
