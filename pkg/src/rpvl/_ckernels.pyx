# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels for the inner worst-case expectation problems.

Same contracts and algorithms as :mod:`rpvl._pykernels`; rows are solved
one at a time in C loops instead of as stacked numpy arrays.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, exp, log, log1p, expm1, fabs, pow, INFINITY
from libc.stdlib cimport qsort

cnp.import_array()

from rpvl._pykernels import LATTICE_SLACK, lattice_axes

cdef double INV_PHI = (sqrt(5.0) - 1.0) / 2.0
cdef double INV_PHI2 = (3.0 - sqrt(5.0)) / 2.0

cdef double FEAS_SLACK = 1e-12


cdef inline double _chi2_obj(const double[::1] p, const double[::1] v, Py_ssize_t S,
                             double C, double x) noexcept nogil:
    cdef double acc = 0.0, g
    cdef Py_ssize_t j
    for j in range(S):
        if p[j] > 0.0:
            g = x - v[j]
            if g > 0.0:
                acc += p[j] * g * g
    return C * sqrt(acc) - x


cdef double _log_moment(const double[::1] p, const double[::1] v, Py_ssize_t S,
                        double m, double lam) noexcept nogil:
    # direct sum: no cancellation, and the support minimum keeps it positive
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(S):
        if p[j] > 0.0:
            acc += p[j] * exp(-(v[j] - m) / lam)
    return log(acc)


cdef inline double _kl_obj(const double[::1] p, const double[::1] v, Py_ssize_t S,
                           double rho, double m, double lam) noexcept nogil:
    cdef double acc = 0.0, sh
    cdef Py_ssize_t j
    if lam <= 0.0:
        return -m
    for j in range(S):
        if p[j] > 0.0:
            sh = v[j] - m
            if sh < 0.0:
                sh = 0.0
            acc += p[j] * expm1(-sh / lam)
    if acc > -0.5:
        return lam * rho + lam * log1p(acc) - m
    # the moment is small: 1 + acc has lost its digits, so sum it directly
    return lam * rho + lam * _log_moment(p, v, S, m, lam) - m




cdef double _golden(int kind, const double[::1] p, const double[::1] v, Py_ssize_t S,
                    double C, double rho, double m, double lo, double hi,
                    double tol, int max_iter, int grid,
                    double* out_x, long* out_evals) noexcept nogil:
    # kind 1: chi-square objective (C used), kind 2: KL objective (rho, m used)
    cdef int k, best_k = 0, it = 0
    cdef double x, fx, best_f = INFINITY, best_x = lo
    cdef double a, b, c, d, fc, fd, h
    cdef long evals = 0
    for k in range(grid):
        if k == grid - 1:
            x = hi
        else:
            x = lo + (hi - lo) * (<double>k / <double>(grid - 1))
        if kind == 1:
            fx = _chi2_obj(p, v, S, C, x)
        else:
            fx = _kl_obj(p, v, S, rho, m, x)
        evals += 1
        if fx < best_f:
            best_f = fx
            best_x = x
            best_k = k
    if best_k == 0:
        a = lo
    else:
        a = lo + (hi - lo) * (<double>(best_k - 1) / <double>(grid - 1))
    if best_k >= grid - 2:
        b = hi
    else:
        b = lo + (hi - lo) * (<double>(best_k + 1) / <double>(grid - 1))
    h = b - a
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    if kind == 1:
        fc = _chi2_obj(p, v, S, C, c)
        fd = _chi2_obj(p, v, S, C, d)
    else:
        fc = _kl_obj(p, v, S, rho, m, c)
        fd = _kl_obj(p, v, S, rho, m, d)
    evals += 2
    while h > tol and it < max_iter:
        h = h * INV_PHI
        if fc < fd:
            b = d
            d = c
            fd = fc
            c = a + INV_PHI2 * h
            if kind == 1:
                fc = _chi2_obj(p, v, S, C, c)
            else:
                fc = _kl_obj(p, v, S, rho, m, c)
        else:
            a = c
            c = d
            fc = fd
            d = a + INV_PHI * h
            if kind == 1:
                fd = _chi2_obj(p, v, S, C, d)
            else:
                fd = _kl_obj(p, v, S, rho, m, d)
        evals += 1
        it += 1
    if fc < best_f:
        best_f = fc
        best_x = c
    if fd < best_f:
        best_f = fd
        best_x = d
    out_x[0] = best_x
    out_evals[0] = evals
    return best_f


def tv_batch(const double[:, ::1] P, const double[::1] v, double rho):
    cdef Py_ssize_t n = P.shape[0], S = P.shape[1], r, j, k
    values_a = np.empty(n)
    duals_a = np.empty(n)
    cdef double[::1] values = values_a, duals = duals_a
    cdef double m = INFINITY, cp, cpv, g, best, best_eta, e
    for j in range(S):
        if v[j] < m:
            m = v[j]
    order_a = np.argsort(np.asarray(v), kind="stable").astype(np.intp)
    cdef Py_ssize_t[::1] order = order_a
    with nogil:
        for r in range(n):
            if rho == 0.0:
                cp = 0.0
                for j in range(S):
                    cp += P[r, j] * v[j]
                values[r] = cp
                duals[r] = 0.0
                continue
            if rho >= 1.0:
                values[r] = m
                duals[r] = m
                continue
            # prefix sums over ascending v give E_p[(e - v)_+] at each kink e
            best = INFINITY
            best_eta = m
            cp = 0.0
            cpv = 0.0
            for k in range(S):
                j = order[k]
                e = v[j]
                cp += P[r, j]
                cpv += P[r, j] * e
                g = e * cp - cpv + (e - m) * rho - e
                if g < best:
                    best = g
                    best_eta = e
            values[r] = -best
            duals[r] = best_eta
    return values_a, duals_a


cdef void _support_range(const double[:, ::1] P, const double[::1] v, Py_ssize_t r, Py_ssize_t S,
                         double* m, double* M, double* mean) noexcept nogil:
    cdef Py_ssize_t j
    m[0] = INFINITY
    M[0] = -INFINITY
    mean[0] = 0.0
    for j in range(S):
        mean[0] += P[r, j] * v[j]
        if P[r, j] > 0.0:
            if v[j] < m[0]:
                m[0] = v[j]
            if v[j] > M[0]:
                M[0] = v[j]


def _scalar_batch(int kind, const double[:, ::1] P, const double[::1] v, double rho, scale,
                  double tol, int max_iter, int grid):
    cdef Py_ssize_t n = P.shape[0], S = P.shape[1], r
    values_a = np.empty(n)
    duals_a = np.empty(n)
    evals_a = np.zeros(n, dtype=np.int64)
    cdef double[::1] values = values_a, duals = duals_a
    cdef long[::1] evals = evals_a
    cdef double m, M, mean, lo, hi, spread, C = sqrt(1.0 + rho), x, fx
    cdef long ev
    cdef bint has_scale = scale is not None
    cdef double sc = float(scale) if has_scale else 0.0
    with nogil:
        for r in range(n):
            _support_range(P, v, r, S, &m, &M, &mean)
            if rho == 0.0:
                values[r] = mean
                duals[r] = 0.0
                continue
            if M - m <= 0.0:
                values[r] = m
                duals[r] = m if kind == 1 else 0.0
                continue
            if kind == 1:
                spread = sc if has_scale else M - m
                lo = m
                hi = m + C * spread / (C - 1.0)
            else:
                lo = 0.0
                if has_scale:
                    hi = sc / rho
                else:
                    hi = mean - m
                    if hi < 0.0:
                        hi = 0.0
                    hi = hi / rho
            fx = _golden(kind, P[r], v, S, C, rho, m, lo, hi, tol, max_iter, grid, &x, &ev)
            values[r] = -fx
            duals[r] = x
            evals[r] = ev
    return values_a, duals_a, evals_a


def chi2_batch(P, v, double rho, scale, double tol, int max_iter, int grid):
    return _scalar_batch(1, P, v, rho, scale, tol, max_iter, grid)


def kl_batch(P, v, double rho, scale, double tol, int max_iter, int grid):
    return _scalar_batch(2, P, v, rho, scale, tol, max_iter, grid)


def kl_objective(P, v, double rho, lam):
    """KL dual objective at ``lam`` (shape ``(n, k)``) for each row of ``P``."""
    cdef const double[:, ::1] Pm = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[::1] vm = np.ascontiguousarray(v, dtype=np.float64)
    cdef const double[:, ::1] L = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t n = Pm.shape[0], S = Pm.shape[1], K = L.shape[1], r, k
    out_a = np.empty((n, K))
    cdef double[:, ::1] out = out_a
    cdef double m, M, mean
    with nogil:
        for r in range(n):
            _support_range(Pm, vm, r, S, &m, &M, &mean)
            for k in range(K):
                out[r, k] = _kl_obj(Pm[r], vm, S, rho, m, L[r, k])
    return out_a


cdef Py_ssize_t _envelope(const double[::1] v, const double[:, ::1] cost, Py_ssize_t t,
                          Py_ssize_t S, double* xs, double* ys) noexcept nogil:
    cdef Py_ssize_t j, k = 0, nk = 1, best_j
    cdef double lam = 0.0, cr, best, sk
    for j in range(1, S):
        if v[j] < v[k] or (v[j] == v[k] and cost[j, t] < cost[k, t]):
            k = j
    xs[0] = 0.0
    ys[0] = v[k]
    while True:
        sk = cost[k, t]
        best = INFINITY
        best_j = -1
        for j in range(S):
            if cost[j, t] < sk:
                cr = (v[j] - v[k]) / (sk - cost[j, t])
                if cr < best or (cr == best and cost[j, t] < cost[best_j, t]):
                    best = cr
                    best_j = j
        if best_j < 0:
            break
        if best > lam:
            lam = best
        k = best_j
        if lam == xs[nk - 1]:
            ys[nk - 1] = v[k] + lam * cost[k, t]
        else:
            xs[nk] = lam
            ys[nk] = v[k] + lam * cost[k, t]
            nk += 1
    return nk


cdef inline double _interp(double x, const double* xs, const double* ys, Py_ssize_t nk) noexcept nogil:
    # envelope is constant after its last knot
    cdef Py_ssize_t lo = 0, hi = nk - 1, mid
    if x >= xs[nk - 1]:
        return ys[nk - 1]
    if x <= xs[0]:
        return ys[0]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    return ys[lo] + (ys[hi] - ys[lo]) * (x - xs[lo]) / (xs[hi] - xs[lo])


cdef int _cmp_double(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*>a)[0], y = (<const double*>b)[0]
    return (x > y) - (x < y)


def wass_batch(const double[:, ::1] P, const double[::1] v, const double[:, ::1] cost, double radius_pow, scale):
    cdef Py_ssize_t n = P.shape[0], S = P.shape[1], r, t, u, q, nc
    values_a = np.empty(n)
    duals_a = np.empty(n)
    evals_a = np.zeros(n, dtype=np.int64)
    cdef double[::1] values = values_a, duals = duals_a
    cdef long[::1] evals = evals_a
    kx_a = np.zeros((S, S + 1))
    ky_a = np.zeros((S, S + 1))
    nknot_a = np.zeros(S, dtype=np.intp)
    cand_a = np.zeros(S * (S + 1) + 2)
    cdef double[:, ::1] kx = kx_a, ky = ky_a
    cdef Py_ssize_t[::1] nknot = nknot_a
    cdef double[::1] cand = cand_a
    cdef double m = INFINITY, mean, hi, F, best, best_lam, x
    cdef long distinct
    cdef bint has_scale = scale is not None
    cdef double sc = float(scale) if has_scale else 0.0
    for t in range(S):
        if v[t] < m:
            m = v[t]
    with nogil:
        for t in range(S):
            nknot[t] = _envelope(v, cost, t, S, &kx[t, 0], &ky[t, 0])
        for r in range(n):
            mean = 0.0
            for t in range(S):
                mean += P[r, t] * v[t]
            if has_scale:
                hi = sc / radius_pow
            else:
                hi = mean - m
                if hi < 0.0:
                    hi = 0.0
                hi = hi / radius_pow
            nc = 0
            cand[nc] = 0.0
            nc += 1
            cand[nc] = hi
            nc += 1
            for t in range(S):
                if P[r, t] > 0.0:
                    for u in range(1, nknot[t]):
                        x = kx[t, u]
                        if x > 0.0 and x < hi:
                            cand[nc] = x
                            nc += 1
            qsort(&cand[0], nc, sizeof(double), _cmp_double)
            best = -INFINITY
            best_lam = 0.0
            distinct = 0
            for q in range(nc):
                x = cand[q]
                if q > 0 and x == cand[q - 1]:
                    continue
                distinct += 1
                F = -x * radius_pow
                for t in range(S):
                    if P[r, t] > 0.0:
                        F += P[r, t] * _interp(x, &kx[t, 0], &ky[t, 0], nknot[t])
                if F > best:
                    best = F
                    best_lam = x
            values[r] = best
            duals[r] = best_lam
            evals[r] = distinct
    return values_a, duals_a, evals_a


# --- brute-force simplex grid oracle ---------------------------------------------


cdef double _divergence(int kind, const double* q, const double[::1] p, Py_ssize_t S,
                        const double* cmat, const Py_ssize_t[::1] order) noexcept nogil:
    cdef Py_ssize_t j, i, k
    cdef double acc = 0.0, c, a, b
    if kind == 0:
        for j in range(S):
            acc += fabs(q[j] - p[j])
        return 0.5 * acc
    if kind == 1:
        for j in range(S):
            if p[j] > 0.0:
                acc += (q[j] - p[j]) * (q[j] - p[j]) / p[j]
            elif q[j] > 0.0:
                return INFINITY
        return acc
    if kind == 2:
        for j in range(S):
            if q[j] > 0.0:
                if p[j] <= 0.0:
                    return INFINITY
                acc += q[j] * log(q[j] / p[j])
        return acc
    # monotone coupling, walking both distributions in ascending position
    i = 0
    k = 0
    a = q[order[0]]
    b = p[order[0]]
    while i < S and k < S:
        c = cmat[i * S + k]
        if a < b:
            acc += a * c
            b -= a
            i += 1
            if i < S:
                a = q[order[i]]
        else:
            acc += b * c
            a -= b
            k += 1
            if k < S:
                b = p[order[k]]
    return acc


cdef inline double _dot(const double* q, const double[::1] v, Py_ssize_t S) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(S):
        acc += q[j] * v[j]
    return acc


def simplex_grid_min(int kind, p, v, double rho, double step, positions=None, double ppow=1.0):
    """Minimum of ``q @ v`` over the grid points ``q`` of ``lattice_axes`` within the ball."""
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t S = pv.shape[0], free, o0, o1, o2, i0, i1, i2, n0, n1, n2
    cdef double bound = rho, best = INFINITY, obj, rest0, rest1
    cdef double slack = LATTICE_SLACK
    cdef double q[4]
    cdef double cmat[16]
    cdef const double[::1] posv
    cdef const Py_ssize_t[::1] order
    cdef const double[::1] ax0, ax1, ax2
    if S > 4 or S < 2:
        raise ValueError("grid oracle supports 2 to 4 states")
    if kind == 3:
        posv = np.ascontiguousarray(positions, dtype=np.float64)
        order = np.argsort(np.asarray(posv), kind="stable").astype(np.intp)
        bound = pow(rho, ppow)
    else:
        posv = np.zeros(S)
        order = np.arange(S, dtype=np.intp)
    # cost between the i-th and k-th states in ascending position
    for i0 in range(S):
        for i1 in range(S):
            cmat[i0 * S + i1] = pow(fabs(posv[order[i0]] - posv[order[i1]]), ppow)
    free_, axes = lattice_axes(np.asarray(pv), np.asarray(vv), step)
    free = free_
    others = [j for j in range(S) if j != free]
    o0 = others[0]
    ax0 = axes[0]
    n0 = ax0.shape[0]
    if S >= 3:
        o1 = others[1]
        ax1 = axes[1]
        n1 = ax1.shape[0]
    if S == 4:
        o2 = others[2]
        ax2 = axes[2]
        n2 = ax2.shape[0]
    with nogil:
        for j in range(S):
            q[j] = 0.0
        if S == 2:
            for i0 in range(n0):
                q[o0] = ax0[i0]
                q[free] = 1.0 - ax0[i0]
                if q[free] < 0.0:
                    break
                obj = _dot(q, vv, S)
                if obj < best and _divergence(kind, q, pv, S, cmat, order) <= bound + FEAS_SLACK:
                    best = obj
        elif S == 3:
            for i0 in range(n0):
                rest0 = 1.0 - ax0[i0]
                if rest0 < -slack:
                    break
                q[o0] = ax0[i0]
                for i1 in range(n1):
                    if ax1[i1] > rest0 + slack:
                        break
                    q[o1] = ax1[i1]
                    q[free] = rest0 - ax1[i1]
                    if q[free] < 0.0:
                        q[free] = 0.0
                    obj = _dot(q, vv, S)
                    if obj < best and _divergence(kind, q, pv, S, cmat, order) <= bound + FEAS_SLACK:
                        best = obj
        else:
            for i0 in range(n0):
                rest0 = 1.0 - ax0[i0]
                if rest0 < -slack:
                    break
                q[o0] = ax0[i0]
                for i1 in range(n1):
                    if ax1[i1] > rest0 + slack:
                        break
                    rest1 = rest0 - ax1[i1]
                    q[o1] = ax1[i1]
                    for i2 in range(n2):
                        if ax2[i2] > rest1 + slack:
                            break
                        q[o2] = ax2[i2]
                        q[free] = rest1 - ax2[i2]
                        if q[free] < 0.0:
                            q[free] = 0.0
                        obj = _dot(q, vv, S)
                        if obj < best and _divergence(kind, q, pv, S, cmat, order) <= bound + FEAS_SLACK:
                            best = obj
    return best
