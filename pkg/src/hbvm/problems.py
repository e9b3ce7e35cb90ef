"""Problem definitions.

Two problem classes are supported:

* canonical Hamiltonian systems  y' = J grad_H(y),  y = (q, p) in R^{2m},
  with J the canonical structure matrix [[0, I], [-I, 0]];
* separable systems given by a potential-like function U with
  H(q, p) = p.p/2 - U(q), equivalent to the second-order form
  q'' = grad_U(q).

Note the sign convention: U enters H with a minus sign, so the harmonic
oscillator H = (p^2 + q^2)/2 corresponds to U(q) = -q^2/2.

Evaluation callables must be pure and must broadcast over stacked leading
axes (an (n, dim) array of points returns n results); the built-ins do.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

__all__ = [
    "KernelPotential",
    "HamiltonianProblem",
    "SeparableProblem",
    "separable_problem",
    "hamiltonian_problem",
    "as_first_order",
    "quintic_oscillator",
    "pendulum",
    "harmonic_oscillator",
    "get_problem",
    "PROBLEM_NAMES",
    "check_derivatives",
    "DerivativeReport",
]


@dataclass(frozen=True)
class KernelPotential:
    """Descriptor of a one-dimensional built-in U, consumed by the compiled
    step kernels.  kind is "poly" (coefficients ascending) or "pendulum"
    (U = cos q - 1).  Problems without a descriptor run on the pure-Python
    code path."""

    kind: str
    coeffs: Optional[tuple] = None


@dataclass(frozen=True)
class HamiltonianProblem:
    """Canonical Hamiltonian system y' = J grad_H(y) on R^{2m}."""

    name: str
    m: int
    eval_H: Callable
    grad_H: Callable
    hess_H: Callable
    y0: np.ndarray
    potential: Optional[KernelPotential] = None

    @property
    def dim(self):
        return 2 * self.m

    def structure_matrix(self):
        """The canonical J = [[0, I], [-I, 0]]."""
        m = self.m
        j = np.zeros((2 * m, 2 * m))
        j[:m, m:] = np.eye(m)
        j[m:, :m] = -np.eye(m)
        return j


@dataclass(frozen=True)
class SeparableProblem:
    """Separable system q'' = grad_U(q) with H(q, p) = p.p/2 - U(q)."""

    name: str
    m: int
    eval_U: Callable
    grad_U: Callable
    hess_U: Callable
    q0: np.ndarray
    p0: np.ndarray
    potential: Optional[KernelPotential] = None

    def eval_H(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1) - self.eval_U(q)


def _fd_jacobian(fn, step):
    """Central-difference Jacobian of a vector map, the fallback used when
    no analytic Hessian is supplied."""

    def jac(x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            return np.stack([jac(row) for row in x])
        n = x.size
        out = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = step
            out[:, i] = (np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * step)
        return 0.5 * (out + out.T)

    return jac


def separable_problem(name, m, eval_U, grad_U, q0, p0, hess_U=None, potential=None,
                      fd_step=1e-6):
    """Assemble a SeparableProblem, filling in a finite-difference Hessian
    when none is given."""
    if hess_U is None:
        hess_U = _fd_jacobian(grad_U, fd_step)
    return SeparableProblem(
        name=name, m=m, eval_U=eval_U, grad_U=grad_U, hess_U=hess_U,
        q0=np.asarray(q0, dtype=float), p0=np.asarray(p0, dtype=float),
        potential=potential,
    )


def hamiltonian_problem(name, m, eval_H, grad_H, y0, hess_H=None, potential=None,
                        fd_step=1e-6):
    """Assemble a HamiltonianProblem, with a finite-difference Hessian
    fallback."""
    if hess_H is None:
        hess_H = _fd_jacobian(grad_H, fd_step)
    return HamiltonianProblem(
        name=name, m=m, eval_H=eval_H, grad_H=grad_H, hess_H=hess_H,
        y0=np.asarray(y0, dtype=float), potential=potential,
    )


def as_first_order(prob):
    """Lift a separable problem to the canonical first-order form on
    y = (q, p).  H, grad and Hessian are assembled from the U callables, so
    both formulations integrate exactly the same flow."""
    m = prob.m

    def eval_h(y):
        y = np.asarray(y, dtype=float)
        q, p = y[..., :m], y[..., m:]
        return 0.5 * np.sum(p * p, axis=-1) - prob.eval_U(q)

    def grad_h(y):
        y = np.asarray(y, dtype=float)
        q, p = y[..., :m], y[..., m:]
        return np.concatenate([-prob.grad_U(q), p], axis=-1)

    def hess_h(y):
        y = np.asarray(y, dtype=float)
        q = y[..., :m]
        hu = np.asarray(prob.hess_U(q))
        out = np.zeros(y.shape[:-1] + (2 * m, 2 * m))
        out[..., :m, :m] = -hu
        out[..., m:, m:] = np.eye(m)
        return out

    return HamiltonianProblem(
        name=prob.name, m=m, eval_H=eval_h, grad_H=grad_h, hess_H=hess_h,
        y0=np.concatenate([prob.q0, prob.p0]), potential=prob.potential,
    )


def _poly_separable(name, u_coeffs, q0, p0):
    """One-dimensional separable problem with polynomial U (ascending
    coefficients)."""
    uc = np.asarray(u_coeffs, dtype=float)
    gc = npoly.polyder(uc)
    hc = npoly.polyder(gc)

    def eval_u(q):
        return npoly.polyval(np.asarray(q, dtype=float)[..., 0], uc)

    def grad_u(q):
        return npoly.polyval(np.asarray(q, dtype=float), gc)

    def hess_u(q):
        return npoly.polyval(np.asarray(q, dtype=float)[..., None], hc)

    return SeparableProblem(
        name=name, m=1, eval_U=eval_u, grad_U=grad_u, hess_U=hess_u,
        q0=np.array([float(q0)]), p0=np.array([float(p0)]),
        potential=KernelPotential("poly", tuple(uc)),
    )


def quintic_oscillator():
    """The stiff quintic benchmark: U(q) = 1e4 q^2 (4/5 q^3 - 3/4 q^2
    - 2/3 q + 1/2), started from q = 0 with unit velocity.  The force
    grad_U(q) = 1e4 q (4 q^3 - 3 q^2 - 2 q + 1) makes the motion a fast
    strongly nonlinear oscillation with H(q0, p0) = 1/2."""
    return _poly_separable(
        "quintic",
        [0.0, 0.0, 1e4 * 0.5, -1e4 * 2.0 / 3.0, -1e4 * 0.75, 1e4 * 0.8],
        q0=0.0, p0=1.0,
    )


def harmonic_oscillator():
    """H = (p^2 + q^2)/2 via U(q) = -q^2/2; exact solution is a rotation,
    handy as an analytically solvable reference."""
    return _poly_separable("harmonic", [0.0, 0.0, -0.5], q0=1.0, p0=0.0)


def pendulum():
    """Planar pendulum, U(q) = cos(q) - 1, i.e. H = p^2/2 + 1 - cos q.
    Non-polynomial, so energy is conserved only to quadrature accuracy
    (machine level for the node counts used here)."""

    def eval_u(q):
        return np.cos(np.asarray(q, dtype=float)[..., 0]) - 1.0

    def grad_u(q):
        return -np.sin(np.asarray(q, dtype=float))

    def hess_u(q):
        return -np.cos(np.asarray(q, dtype=float)[..., None])

    return SeparableProblem(
        name="pendulum", m=1, eval_U=eval_u, grad_U=grad_u, hess_U=hess_u,
        q0=np.array([1.0]), p0=np.array([0.0]),
        potential=KernelPotential("pendulum"),
    )


_BUILTINS = {
    "quintic": quintic_oscillator,
    "pendulum": pendulum,
    "harmonic": harmonic_oscillator,
}

PROBLEM_NAMES = tuple(sorted(_BUILTINS))


def get_problem(name):
    """Built-in separable problem by CLI name."""
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ValueError("unknown problem %r (choose from %s)" % (name, ", ".join(PROBLEM_NAMES)))


# ----------------------------------------------------------------------
# Finite-difference consistency checker
# ----------------------------------------------------------------------


@dataclass
class DerivativeReport:
    max_grad_err: float
    max_hess_err: float
    tol: float
    bad_points: list
    ok: bool


def _fd_grad(f, x, h):
    n = x.size
    g = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _fd_hess_from_grad(g, x, h):
    n = x.size
    out = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        out[:, i] = (np.asarray(g(x + e)) - np.asarray(g(x - e))) / (2 * h)
    return out


def check_derivatives(prob, points=None, fd_step=1e-5, tol=1e-6, n_points=20, seed=0):
    """Compare analytic gradient/Hessian against central differences.

    Deviations are measured relative to max(1, |analytic value|).  Points
    default to a cloud around the initial state.  Non-finite evaluations
    are collected per point instead of raising.
    """
    if not 0.0 < fd_step <= 1e-3:
        raise ValueError("fd_step must lie in (0, 1e-3]")
    separable = isinstance(prob, SeparableProblem)
    if separable:
        center, f, g, hs = prob.q0, lambda x: float(prob.eval_U(x)), prob.grad_U, prob.hess_U
    else:
        center, f, g, hs = prob.y0, lambda x: float(prob.eval_H(x)), prob.grad_H, prob.hess_H
    if points is None:
        rng = np.random.default_rng(seed)
        points = center + 0.5 * rng.standard_normal((n_points, center.size))
    points = np.atleast_2d(np.asarray(points, dtype=float))

    max_g, max_h, bad = 0.0, 0.0, []
    with np.errstate(all="ignore"):
        for idx, x in enumerate(points):
            ga = np.asarray(g(x), dtype=float)
            ha = np.asarray(hs(x), dtype=float)
            if not (np.all(np.isfinite(ga)) and np.all(np.isfinite(ha))):
                bad.append(idx)
                continue
            gerr = np.max(np.abs(ga - _fd_grad(f, x, fd_step))) / max(1.0, np.max(np.abs(ga)))
            herr = np.max(np.abs(ha - _fd_hess_from_grad(g, x, fd_step))) / max(1.0, np.max(np.abs(ha)))
            if not (np.isfinite(gerr) and np.isfinite(herr)):
                bad.append(idx)
                continue
            max_g, max_h = max(max_g, gerr), max(max_h, herr)
    ok = not bad and max_g <= tol and max_h <= tol
    return DerivativeReport(max_grad_err=max_g, max_hess_err=max_h, tol=tol,
                            bad_points=bad, ok=ok)
