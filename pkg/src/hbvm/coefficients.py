"""Constant data defining an HBVM(k, s) method.

Everything a step needs that depends only on (k, s): the polynomial basis
orthonormal on [0, 1] (shifted, scaled Legendre polynomials), the k-point
Gauss-Legendre rule on [0, 1], the matrices of basis values and integrated
basis values at the nodes, the small banded matrix X that maps basis
coefficients of a polynomial to basis coefficients of its antiderivative,
the resulting k x k Butcher matrix, and the blending parameter rho used by
the blended stage solver.

All tableau arrays are frozen (read-only) after construction, so a tableau
can be shared freely across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from . import densecore

__all__ = [
    "MAX_S",
    "MAX_K",
    "legendre_eval",
    "legendre_basis",
    "QuadratureRule",
    "gauss_rule",
    "coupling_xi",
    "coupling_matrices",
    "rho_opt",
    "MethodTableau",
    "build_tableau",
]

MAX_S = 10
MAX_K = 64


# ----------------------------------------------------------------------
# Orthonormal basis on [0, 1]
# ----------------------------------------------------------------------
#
# basis_j(x) = sqrt(2j + 1) * L_j(2x - 1), with L_j the standard Legendre
# polynomial on [-1, 1].  Then integral_0^1 basis_i basis_j = delta_ij,
# basis_0 == 1, and every higher-degree member has zero mean.


def _std_table(n, t):
    """Standard Legendre values L_0..L_n at t (any array shape), via the
    three-term recurrence."""
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = t
    for j in range(1, n):
        out[..., j + 1] = ((2 * j + 1) * t * out[..., j] - j * out[..., j - 1]) / (j + 1)
    return out


def _std_value_and_deriv(n, t):
    """(L_n(t), L_n'(t)) for array t, used by the quadrature Newton solve."""
    t = np.asarray(t, dtype=float)
    pm, p = np.ones_like(t), t.copy()
    if n == 0:
        return pm, np.zeros_like(t)
    for j in range(1, n):
        pm, p = p, ((2 * j + 1) * t * p - j * pm) / (j + 1)
    dp = n * (t * p - pm) / (t * t - 1.0)
    return p, dp


def _check_unit_interval(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("basis evaluation point outside [0, 1]")
    return x


def legendre_eval(j, x):
    """Value of the degree-j orthonormal basis polynomial at x in [0, 1]."""
    if j < 0:
        raise ValueError("polynomial degree must be nonnegative")
    x = _check_unit_interval(x)
    vals = _std_table(j, 2.0 * x - 1.0)[..., j] * np.sqrt(2 * j + 1)
    return float(vals) if np.ndim(vals) == 0 else vals


def legendre_basis(n, x):
    """Matrix of the first n basis values: out[..., j] = basis_j(x)."""
    if n < 1:
        raise ValueError("need at least one basis polynomial")
    x = _check_unit_interval(x)
    table = _std_table(n - 1, 2.0 * x - 1.0)
    return table * np.sqrt(2 * np.arange(n) + 1)


# ----------------------------------------------------------------------
# Gauss-Legendre quadrature on [0, 1]
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """k-point interpolatory rule on [0, 1]: nodes c, positive weights b.

    A k-point Gauss rule integrates polynomials up to degree 2k - 1
    exactly; that property is what makes the methods built on top of it
    conserve polynomial Hamiltonians.
    """

    k: int
    c: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.k < 1 or self.c.shape != (self.k,) or self.b.shape != (self.k,):
            raise ValueError("inconsistent quadrature data")
        if np.any(self.c <= 0.0) or np.any(self.c >= 1.0) or np.any(np.diff(self.c) <= 0.0):
            raise ValueError("nodes must be strictly increasing inside (0, 1)")
        if np.any(self.b <= 0.0):
            raise ValueError("weights must be positive")

    @property
    def omega(self):
        """Diagonal weight matrix diag(b)."""
        return np.diag(self.b)


def gauss_rule(k):
    """Gauss-Legendre nodes and weights on [0, 1].

    Nodes are found by Newton iteration on the degree-k Legendre
    polynomial, started from the classical cosine guesses; weights come
    from the derivative formula.  Accurate to machine precision for the
    supported range k <= MAX_K.
    """
    if k < 1:
        raise ValueError("quadrature needs at least one node")
    if k > MAX_K:
        raise ValueError("node count capped at %d" % MAX_K)
    i = np.arange(1, k + 1)
    t = np.cos(np.pi * (4 * i - 1) / (4 * k + 2))
    for _ in range(100):
        p, dp = _std_value_and_deriv(k, t)
        dt = p / dp
        t -= dt
        if np.max(np.abs(dt)) < 1e-15:
            break
    p, dp = _std_value_and_deriv(k, t)
    t -= p / dp  # one polishing step
    _, dp = _std_value_and_deriv(k, t)
    w = 2.0 / ((1.0 - t * t) * dp * dp)
    c = ((1.0 + t) / 2.0)[::-1]
    b = (w / 2.0)[::-1]
    # enforce the exact symmetry of the rule
    c = (c + 1.0 - c[::-1]) / 2.0
    b = (b + b[::-1]) / 2.0
    return QuadratureRule(k=k, c=c, b=b)


# ----------------------------------------------------------------------
# The antiderivative coupling matrix X and the blending parameter rho
# ----------------------------------------------------------------------
#
# Integrating the basis term by term gives
#   integral_0^x basis_0   = 1/2 basis_0(x) + xi_1 basis_1(x)
#   integral_0^x basis_j   = xi_{j+1} basis_{j+1}(x) - xi_j basis_{j-1}(x)
# with xi_j = 1 / (2 sqrt(4 j^2 - 1)).  Collecting the first s columns
# yields the banded (s+1) x s matrix Xe; its top s x s block is X.


def coupling_xi(j):
    """Off-diagonal coefficient xi_j of the antiderivative coupling."""
    if j < 1:
        raise ValueError("xi is defined for j >= 1")
    return 1.0 / (2.0 * np.sqrt(4.0 * j * j - 1.0))


def coupling_matrices(s):
    """(X, Xe): the s x s coupling matrix and its (s+1) x s extension."""
    if s < 1:
        raise ValueError("need s >= 1")
    xe = np.zeros((s + 1, s))
    xe[0, 0] = 0.5
    for j in range(1, s + 1):
        xi = coupling_xi(j)
        xe[j, j - 1] = xi
        if j < s:
            xe[j - 1, j] = -xi
    return xe[:s].copy(), xe


def _char_poly(s):
    """Coefficients (ascending) of det(X_s - lambda I) via the principal
    minor recurrence of the banded matrix."""
    dm2 = np.array([1.0])  # d_{i-2}
    dm1 = np.array([0.5, -1.0])  # d_1 = a_1 - lambda, a_1 = 1/2
    for i in range(2, s + 1):
        # d_i = (a_i - lambda) d_{i-1} + xi_{i-1}^2 d_{i-2}, a_i = 0
        term = np.convolve(dm1, [0.0, -1.0])
        term[: dm2.size] += coupling_xi(i - 1) ** 2 * dm2
        dm2, dm1 = dm1, term
    return dm1


def _durand_kerner(coeffs):
    """All roots of a real polynomial (ascending coefficients) by
    simultaneous iteration; fine for the tiny degrees used here."""
    c = np.asarray(coeffs, dtype=complex)
    c = c / c[-1]
    n = c.size - 1
    z = (0.4 + 0.9j) ** np.arange(1, n + 1)
    for _ in range(500):
        p = np.polynomial.polynomial.polyval(z, c)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        dz = p / np.prod(diff, axis=1)
        z -= dz
        if np.max(np.abs(dz)) <= 1e-15 * (1.0 + np.max(np.abs(z))):
            break
    return z


def rho_opt(s):
    """Blending parameter for s stages: the smallest modulus among the
    eigenvalues of X_s, the choice giving the best-damped blended
    iteration."""
    if not 1 <= s <= MAX_S:
        raise ValueError("s must be between 1 and %d" % MAX_S)
    roots = _durand_kerner(_char_poly(s))
    return float(np.min(np.abs(roots)))


# ----------------------------------------------------------------------
# Full method tableau
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class MethodTableau:
    """All (k, s)-dependent constants of one HBVM(k, s) method.

    P[i, j]    = basis_j(c_i)                        (k x s, degrees 0..s-1)
    Pe[i, j]   = basis_j(c_i)                        (k x (s+1), degrees 0..s)
    Iint[i, j] = integral_0^{c_i} basis_j            (k x s)
    X, Xe      = antiderivative coupling, Iint == Pe @ Xe
    Iint_X     = Iint @ X, the stage matrix of the second-order form
    A          = Iint @ P.T @ diag(b), the k x k Butcher matrix (rank s)
    rho        = blending parameter rho_opt(s)

    Instances are immutable (arrays are read-only) and safe to share.
    """

    k: int
    s: int
    quad: QuadratureRule
    P: np.ndarray
    Pe: np.ndarray
    Iint: np.ndarray
    Iint_X: np.ndarray
    X: np.ndarray
    Xe: np.ndarray
    X_inv: np.ndarray
    X_sq: np.ndarray
    X_inv_sq: np.ndarray
    A: np.ndarray
    rho: float = field(default=0.0)


def build_tableau(k, s):
    """Construct the full coefficient set for HBVM(k, s), 1 <= s <= k."""
    if s < 1:
        raise ValueError("need at least one polynomial degree of freedom")
    if k < s:
        raise ValueError("need k >= s quadrature nodes (got k=%d < s=%d)" % (k, s))
    if s > MAX_S:
        raise ValueError("s capped at %d" % MAX_S)
    quad = gauss_rule(k)
    pe = legendre_basis(s + 1, quad.c)
    p = pe[:, :s].copy()
    x, xe = coupling_matrices(s)
    iint = pe @ xe
    a = iint @ (p.T * quad.b)
    xlu = densecore.lu_factor(x)
    x_inv = densecore.lu_solve(xlu, np.eye(s))
    tab = MethodTableau(
        k=k,
        s=s,
        quad=quad,
        P=p,
        Pe=pe,
        Iint=iint,
        Iint_X=iint @ x,
        X=x,
        Xe=xe,
        X_inv=x_inv,
        X_sq=x @ x,
        X_inv_sq=x_inv @ x_inv,
        A=a,
        rho=rho_opt(s),
    )
    for arr in (tab.quad.c, tab.quad.b, tab.P, tab.Pe, tab.Iint, tab.Iint_X,
                tab.X, tab.Xe, tab.X_inv, tab.X_sq, tab.X_inv_sq, tab.A):
        arr.flags.writeable = False
    return tab
