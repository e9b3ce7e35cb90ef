# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled fixed-step integration loops for the built-in 1-d problems.

Same algorithms, stopping rules and iteration accounting as the
pure-Python lane (hbvm._kernels_py); the only difference is that the whole
step loop, including stage evaluation of the potential gradient, runs in C
for the two supported potential kinds: polynomial (ascending coefficients)
and the pendulum (U = cos q - 1).

Solver codes: 0 fixed-point, 1 newton, 2 blended.
Status codes: 0 ok, 1 max-iter, 2 diverged, 3 non-finite, 4 singular.

Buffer caps match the tableau caps: k <= 64 nodes, s <= 10 coefficients.
"""

from libc.math cimport fabs, sin, cos, isfinite, INFINITY


cdef inline double poly_eval(const double* cf, int n, double x) noexcept nogil:
    cdef double r = 0.0
    cdef int i
    for i in range(n - 1, -1, -1):
        r = r * x + cf[i]
    return r


cdef inline double pot_grad(int kind, const double* gc, int ng, double q) noexcept nogil:
    if kind == 0:
        return poly_eval(gc, ng, q)
    return -sin(q)


cdef inline double pot_hess(int kind, const double* hc, int nh, double q) noexcept nogil:
    if kind == 0:
        return poly_eval(hc, nh, q)
    return -cos(q)


cdef int lu_fact(double* a, int* piv, int n) noexcept nogil:
    """In-place LU with partial pivoting; returns 1 when a pivot falls
    below the relative threshold 1e-14 * max|a| (same flagging rule as the
    pure lane)."""
    cdef double amax = 0.0, thr, tmp, best
    cdef int i, j, r, p
    for i in range(n * n):
        tmp = fabs(a[i])
        if tmp > amax:
            amax = tmp
    thr = 1e-14 * amax
    for j in range(n):
        best = fabs(a[j * n + j])
        p = j
        for r in range(j + 1, n):
            tmp = fabs(a[r * n + j])
            if tmp > best:
                best = tmp
                p = r
        if best <= thr or not isfinite(best):
            return 1
        piv[j] = p
        if p != j:
            for i in range(n):
                tmp = a[j * n + i]
                a[j * n + i] = a[p * n + i]
                a[p * n + i] = tmp
        for r in range(j + 1, n):
            a[r * n + j] /= a[j * n + j]
            for i in range(j + 1, n):
                a[r * n + i] -= a[r * n + j] * a[j * n + i]
    return 0


cdef void lu_sub(const double* a, const int* piv, int n, double* x) noexcept nogil:
    cdef int i, j
    cdef double tmp
    for j in range(n):
        if piv[j] != j:
            tmp = x[j]
            x[j] = x[piv[j]]
            x[piv[j]] = tmp
    for j in range(n):
        for i in range(j + 1, n):
            x[i] -= a[i * n + j] * x[j]
    for j in range(n - 1, -1, -1):
        x[j] /= a[j * n + j]
        for i in range(j):
            x[i] -= a[i * n + j] * x[j]


def run_loop_second(int kind, const double[::1] gc, const double[::1] hc,
                    const double[::1] c, const double[::1] b, const double[:, ::1] P,
                    const double[:, ::1] IX, const double[:, ::1] Xsq, const double[:, ::1] Xinv_sq,
                    const double[::1] wq, double rho, double q0, double p0,
                    double h, long n_steps, double h_last,
                    int solver, double rel_tol, double abs_tol,
                    int max_iter, int div_window,
                    const long[::1] rec_steps, double[:, ::1] out_states,
                    long[::1] out_iters):
    """Second-order (position-space) loop for m = 1."""
    cdef int k = c.shape[0]
    cdef int s = P.shape[1]
    cdef double gam[10]
    cdef double F[10]
    cdef double eta[10]
    cdef double eta1[10]
    cdef double delta[10]
    cdef double gbuf[64]
    cdef double M[100]
    cdef int piv[10]
    cdef const double* gcp = NULL
    cdef const double* hcp = NULL
    cdef long i_step = 0, it_count, gev = 0, fac = 0, ridx = 0
    cdef long n_rec = rec_steps.shape[0]
    cdef int status = 0, step_status, growth, bad, it, i, j, l
    cdef double hi, h2, g0, sig = 0.0, rho2 = rho * rho
    cdef double qn = q0, pn = p0
    cdef double qi, gi, acc, acc2, dn, gn, prev, a

    if gc.shape[0] > 0:
        gcp = &gc[0]
    if hc.shape[0] > 0:
        hcp = &hc[0]

    while i_step < n_steps:
        hi = h_last if (h_last > 0.0 and i_step == n_steps - 1) else h
        h2 = hi * hi
        step_status = -1
        it_count = 0
        if solver != 0:
            g0 = pot_hess(kind, hcp, hc.shape[0], qn)
            fac += 1
            if solver == 1:
                for j in range(s):
                    for l in range(s):
                        M[j * s + l] = (1.0 if j == l else 0.0) - h2 * Xsq[j, l] * g0
                if lu_fact(M, piv, s):
                    step_status = 4
            else:
                sig = 1.0 - rho2 * h2 * g0
                if sig == 0.0 or not isfinite(sig):
                    step_status = 4
        if step_status < 0:
            for j in range(s):
                gam[j] = 0.0
            prev = INFINITY
            growth = 0
            for it in range(1, max_iter + 1):
                it_count = it
                bad = 0
                for i in range(k):
                    qi = qn + hi * c[i] * pn
                    acc = 0.0
                    for j in range(s):
                        acc += IX[i, j] * gam[j]
                    qi += h2 * acc
                    gi = pot_grad(kind, gcp, gc.shape[0], qi)
                    if not isfinite(gi):
                        bad = 1
                        break
                    gbuf[i] = gi
                if bad:
                    step_status = 3
                    break
                gev += k
                for j in range(s):
                    acc = 0.0
                    for i in range(k):
                        acc += P[i, j] * b[i] * gbuf[i]
                    F[j] = gam[j] - acc
                if solver == 0:
                    for j in range(s):
                        delta[j] = -F[j]
                elif solver == 1:
                    for j in range(s):
                        delta[j] = -F[j]
                    lu_sub(M, piv, s, delta)
                else:
                    for j in range(s):
                        eta[j] = -F[j]
                    for j in range(s):
                        acc = 0.0
                        for l in range(s):
                            acc += Xinv_sq[j, l] * eta[l]
                        eta1[j] = rho2 * acc
                    for j in range(s):
                        delta[j] = (eta1[j] + (eta[j] - eta1[j]) / sig) / sig
                dn = 0.0
                bad = 0
                for j in range(s):
                    gam[j] += delta[j]
                    a = fabs(delta[j])
                    if not isfinite(a):
                        bad = 1
                    elif a > dn:
                        dn = a
                if bad:
                    step_status = 3
                    break
                gn = 0.0
                for j in range(s):
                    a = fabs(gam[j])
                    if a > gn:
                        gn = a
                if dn <= abs_tol + rel_tol * gn:
                    step_status = 0
                    break
                if dn > prev:
                    growth += 1
                    if growth >= div_window:
                        step_status = 2
                        break
                else:
                    growth = 0
                prev = dn
            if step_status < 0:
                step_status = 1
        out_iters[i_step] = it_count
        if step_status != 0:
            status = step_status
            i_step += 1
            break
        acc = 0.0
        acc2 = 0.0
        for i in range(k):
            acc += wq[i] * gbuf[i]
            acc2 += b[i] * gbuf[i]
        qn = qn + hi * pn + h2 * acc
        pn = pn + hi * acc2
        i_step += 1
        if ridx < n_rec and rec_steps[ridx] == i_step:
            out_states[1 + ridx, 0] = qn
            out_states[1 + ridx, 1] = pn
            ridx += 1

    return i_step, status, 1 + ridx, gev, fac


def run_loop_first(int kind, const double[::1] gc, const double[::1] hc,
                   const double[::1] c, const double[::1] b, const double[:, ::1] P,
                   const double[:, ::1] Iint, const double[:, ::1] X, const double[:, ::1] Xinv,
                   double rho, double y0q, double y0p,
                   double h, long n_steps, double h_last,
                   int solver, double rel_tol, double abs_tol,
                   int max_iter, int div_window,
                   const long[::1] rec_steps, double[:, ::1] out_states,
                   long[::1] out_iters):
    """First-order (canonical) loop for m = 1, state (q, p)."""
    cdef int k = c.shape[0]
    cdef int s = P.shape[1]
    cdef int n2 = 2 * s
    cdef double gam[20]
    cdef double F[20]
    cdef double eta[20]
    cdef double eta1[20]
    cdef double delta[20]
    cdef double fq[64]
    cdef double fp[64]
    cdef double M[400]
    cdef int piv[20]
    cdef double N[4]
    cdef int pivN[2]
    cdef double blk[2]
    cdef const double* gcp = NULL
    cdef const double* hcp = NULL
    cdef long i_step = 0, it_count, gev = 0, fac = 0, ridx = 0
    cdef long n_rec = rec_steps.shape[0]
    cdef int status = 0, step_status, growth, bad, it, i, j, l, aa, cc
    cdef double hi, g0
    cdef double qn = y0q, pn = y0p
    cdef double qi, pi, gi, accq, accp, dn, gn, prev, a
    cdef double g0mat[4]

    if gc.shape[0] > 0:
        gcp = &gc[0]
    if hc.shape[0] > 0:
        hcp = &hc[0]

    while i_step < n_steps:
        hi = h_last if (h_last > 0.0 and i_step == n_steps - 1) else h
        step_status = -1
        it_count = 0
        if solver != 0:
            g0 = pot_hess(kind, hcp, hc.shape[0], qn)
            # frozen right-hand-side Jacobian J hess_H = [[0, 1], [g0, 0]]
            g0mat[0] = 0.0
            g0mat[1] = 1.0
            g0mat[2] = g0
            g0mat[3] = 0.0
            fac += 1
            if solver == 1:
                for j in range(s):
                    for aa in range(2):
                        for l in range(s):
                            for cc in range(2):
                                M[(2 * j + aa) * n2 + 2 * l + cc] = (
                                    (1.0 if (j == l and aa == cc) else 0.0)
                                    - hi * X[j, l] * g0mat[2 * aa + cc])
                if lu_fact(M, piv, n2):
                    step_status = 4
            else:
                N[0] = 1.0
                N[1] = -rho * hi
                N[2] = -rho * hi * g0
                N[3] = 1.0
                if lu_fact(N, pivN, 2):
                    step_status = 4
        if step_status < 0:
            for j in range(n2):
                gam[j] = 0.0
            prev = INFINITY
            growth = 0
            for it in range(1, max_iter + 1):
                it_count = it
                bad = 0
                for i in range(k):
                    accq = 0.0
                    accp = 0.0
                    for j in range(s):
                        accq += Iint[i, j] * gam[2 * j]
                        accp += Iint[i, j] * gam[2 * j + 1]
                    qi = qn + hi * accq
                    pi = pn + hi * accp
                    gi = pot_grad(kind, gcp, gc.shape[0], qi)
                    if not (isfinite(gi) and isfinite(pi)):
                        bad = 1
                        break
                    fq[i] = pi
                    fp[i] = gi
                if bad:
                    step_status = 3
                    break
                gev += k
                for j in range(s):
                    accq = 0.0
                    accp = 0.0
                    for i in range(k):
                        accq += P[i, j] * b[i] * fq[i]
                        accp += P[i, j] * b[i] * fp[i]
                    F[2 * j] = gam[2 * j] - accq
                    F[2 * j + 1] = gam[2 * j + 1] - accp
                if solver == 0:
                    for j in range(n2):
                        delta[j] = -F[j]
                elif solver == 1:
                    for j in range(n2):
                        delta[j] = -F[j]
                    lu_sub(M, piv, n2, delta)
                else:
                    for j in range(n2):
                        eta[j] = -F[j]
                    for j in range(s):
                        accq = 0.0
                        accp = 0.0
                        for l in range(s):
                            accq += Xinv[j, l] * eta[2 * l]
                            accp += Xinv[j, l] * eta[2 * l + 1]
                        eta1[2 * j] = rho * accq
                        eta1[2 * j + 1] = rho * accp
                    for j in range(s):
                        blk[0] = eta[2 * j] - eta1[2 * j]
                        blk[1] = eta[2 * j + 1] - eta1[2 * j + 1]
                        lu_sub(N, pivN, 2, blk)
                        blk[0] += eta1[2 * j]
                        blk[1] += eta1[2 * j + 1]
                        lu_sub(N, pivN, 2, blk)
                        delta[2 * j] = blk[0]
                        delta[2 * j + 1] = blk[1]
                dn = 0.0
                bad = 0
                for j in range(n2):
                    gam[j] += delta[j]
                    a = fabs(delta[j])
                    if not isfinite(a):
                        bad = 1
                    elif a > dn:
                        dn = a
                if bad:
                    step_status = 3
                    break
                gn = 0.0
                for j in range(n2):
                    a = fabs(gam[j])
                    if a > gn:
                        gn = a
                if dn <= abs_tol + rel_tol * gn:
                    step_status = 0
                    break
                if dn > prev:
                    growth += 1
                    if growth >= div_window:
                        step_status = 2
                        break
                else:
                    growth = 0
                prev = dn
            if step_status < 0:
                step_status = 1
        out_iters[i_step] = it_count
        if step_status != 0:
            status = step_status
            i_step += 1
            break
        qn += hi * gam[0]
        pn += hi * gam[1]
        i_step += 1
        if ridx < n_rec and rec_steps[ridx] == i_step:
            out_states[1 + ridx, 0] = qn
            out_states[1 + ridx, 1] = pn
            ridx += 1

    return i_step, status, 1 + ridx, gev, fac
