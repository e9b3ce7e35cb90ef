"""Minimal dense linear algebra used throughout the package.

Block vectors are plain C-contiguous arrays of shape (s, d): s blocks of
dimension d, so the flat view is the concatenation of the blocks.  This is
the layout the stage solvers use for the unknown coefficient vector.

Everything here is a pure function of its inputs; distinct calls never
share state and are safe to run concurrently on distinct data.
"""

import numpy as np

__all__ = [
    "PIVOT_RTOL",
    "SingularMatrixError",
    "LUFactor",
    "lu_factor",
    "lu_solve",
    "kron_apply",
    "kron_scalar_apply",
]

# Relative pivot threshold below which a factorization is flagged singular.
PIVOT_RTOL = 1e-14


class SingularMatrixError(Exception):
    """Raised when a solve is attempted with a singular factorization."""


class LUFactor:
    """LU factorization with partial pivoting of a small square matrix.

    Attributes
    ----------
    lu : (n, n) array holding L (unit diagonal, below) and U (on/above).
    perm : row permutation applied to the right-hand side before solving.
    singular : True if a pivot fell below ``PIVOT_RTOL * max|M|``.  A
        singular factor refuses to solve; the caller decides the fallback.
    """

    def __init__(self, lu, perm, singular):
        self.lu = lu
        self.perm = perm
        self.singular = singular

    @property
    def n(self):
        return self.lu.shape[0]


def lu_factor(mat):
    """Factor a square matrix with partial pivoting.

    Never raises on singular input: the returned factor carries an explicit
    ``singular`` flag instead, so callers can fail loudly themselves.
    """
    a = np.array(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("lu_factor expects a square matrix, got shape %s" % (a.shape,))
    if not np.all(np.isfinite(a)):
        raise ValueError("lu_factor expects finite entries")
    n = a.shape[0]
    perm = np.arange(n)
    thresh = PIVOT_RTOL * (np.max(np.abs(a)) if n else 0.0)
    singular = n == 0 and False
    for j in range(n):
        p = j + int(np.argmax(np.abs(a[j:, j])))
        if abs(a[p, j]) <= thresh:
            singular = True
            break
        if p != j:
            a[[j, p]] = a[[p, j]]
            perm[[j, p]] = perm[[p, j]]
        a[j + 1 :, j] /= a[j, j]
        a[j + 1 :, j + 1 :] -= np.outer(a[j + 1 :, j], a[j, j + 1 :])
    return LUFactor(a, perm, singular)


def lu_solve(fac, rhs):
    """Solve M x = rhs given the factorization of M.

    rhs may be a vector of length n or an (n, r) matrix of stacked
    right-hand sides; the result has the same shape.
    """
    if fac.singular:
        raise SingularMatrixError("matrix flagged singular during factorization")
    b = np.asarray(rhs, dtype=float)
    vec = b.ndim == 1
    if b.shape[0] != fac.n:
        raise ValueError("rhs has %d rows, factor is %dx%d" % (b.shape[0], fac.n, fac.n))
    x = b[fac.perm].reshape(fac.n, -1).copy()
    a = fac.lu
    for j in range(fac.n - 1):
        x[j + 1 :] -= np.outer(a[j + 1 :, j], x[j])
    for j in range(fac.n - 1, -1, -1):
        x[j] /= a[j, j]
        if j:
            x[:j] -= np.outer(a[:j, j], x[j])
    return x[:, 0] if vec else x.reshape(b.shape)


def _check_blocks(v):
    v = np.asarray(v, dtype=float)
    if v.ndim != 2:
        raise ValueError("block vector must be a 2-d (s, d) array, got shape %s" % (v.shape,))
    return v


def kron_apply(S, G, v):
    """Apply the block operator (S kron G) to a block vector.

    v holds s blocks of dimension d; the result block i is
    sum_j S[i, j] * (G @ v[j]).  G may be a (d, d) matrix or a callable
    implementing the matrix-vector product, so the full (s*d) x (s*d)
    Kronecker matrix is never formed.
    """
    S = np.asarray(S, dtype=float)
    v = _check_blocks(v)
    if S.ndim != 2 or S.shape[1] != v.shape[0]:
        raise ValueError("S has shape %s, incompatible with %d blocks" % (S.shape, v.shape[0]))
    if callable(G):
        gv = np.stack([np.asarray(G(v[j]), dtype=float) for j in range(v.shape[0])])
        if gv.shape != v.shape:
            raise ValueError("G callback returned shape %s, expected %s" % (gv.shape, v.shape))
    else:
        G = np.asarray(G, dtype=float)
        if G.ndim != 2 or G.shape != (v.shape[1], v.shape[1]):
            raise ValueError("G has shape %s, blocks have dimension %d" % (G.shape, v.shape[1]))
        gv = v @ G.T
    return S @ gv


def kron_scalar_apply(S, v):
    """Apply (S kron I_d) to a block vector: out[i] = sum_j S[i, j] v[j]."""
    S = np.asarray(S, dtype=float)
    v = _check_blocks(v)
    if S.ndim != 2 or S.shape[1] != v.shape[0]:
        raise ValueError("S has shape %s, incompatible with %d blocks" % (S.shape, v.shape[0]))
    return S @ v
