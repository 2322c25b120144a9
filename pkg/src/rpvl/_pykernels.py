"""Vectorized numpy implementation of the batch inner-problem kernels.

This is the fallback backend: it is selected when the compiled extension
``rpvl._ckernels`` is unavailable, and it is the reference the compiled
kernels are tested against.  Every function takes a row-stacked matrix of
nominal distributions ``P`` (shape ``(n, S)``) and one shared value vector
``v`` (shape ``(S,)``), which is the access pattern of a single Bellman phase.
"""
import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0

KIND_TV = 0
KIND_CHI2 = 1
KIND_KL = 2
KIND_WASSERSTEIN = 3

_FEAS_SLACK = 1e-12
LATTICE_SLACK = 1e-12


def _support_min_max(P, v):
    on = P > 0.0
    m = np.where(on, v[None, :], np.inf).min(axis=1)
    M = np.where(on, v[None, :], -np.inf).max(axis=1)
    return m, M


def _golden_batch(f, lo, hi, tol, max_iter, grid):
    """Minimize convex ``f`` row-wise on ``[lo, hi]``.

    ``f(x, rows)`` evaluates the objectives of ``rows`` at ``x`` (shape
    ``(len(rows), k)``).  A coarse grid of ``grid`` points picks the starting
    cell, then golden-section search shrinks it to width ``tol``.  Returns the
    best point, the best value and the number of evaluations per row.
    """
    n = lo.shape[0]
    t = np.linspace(0.0, 1.0, grid)
    xs = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    xs[:, -1] = hi
    rows = np.arange(n)
    fs = f(xs, rows)
    k = np.argmin(fs, axis=1)
    best_x = xs[rows, k].copy()
    best_f = fs[rows, k].copy()
    a = xs[rows, np.maximum(k - 1, 0)].copy()
    b = xs[rows, np.minimum(k + 1, grid - 1)].copy()

    h = b - a
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc = f(c[:, None], rows)[:, 0]
    fd = f(d[:, None], rows)[:, 0]
    evals = np.full(n, grid + 2, dtype=np.int64)

    active = h > tol
    it = 0
    while active.any() and it < max_iter:
        idx = np.flatnonzero(active)
        left = fc[idx] < fd[idx]
        ai, bi, ci, di, hi_ = a[idx], b[idx], c[idx], d[idx], h[idx] * INV_PHI
        fci, fdi = fc[idx], fd[idx]

        new_b = np.where(left, di, bi)
        new_a = np.where(left, ai, ci)
        new_c = np.where(left, new_a + INV_PHI2 * hi_, di)
        new_d = np.where(left, ci, new_a + INV_PHI * hi_)
        xnew = np.where(left, new_c, new_d)
        fnew = f(xnew[:, None], idx)[:, 0]
        new_fc = np.where(left, fnew, fdi)
        new_fd = np.where(left, fci, fnew)

        a[idx], b[idx], c[idx], d[idx], h[idx] = new_a, new_b, new_c, new_d, hi_
        fc[idx], fd[idx] = new_fc, new_fd
        evals[idx] += 1
        active[idx] = hi_ > tol
        it += 1

    for xx, ff in ((c, fc), (d, fd)):
        better = ff < best_f
        best_f = np.where(better, ff, best_f)
        best_x = np.where(better, xx, best_x)
    return best_x, best_f, evals


def tv_batch(P, v, rho):
    """Exact TV worst-case expectation for every row of ``P``.

    The dual objective is convex piecewise linear in the threshold with kinks
    at the entries of ``v``, so its minimum is found by evaluating every kink.
    """
    n = P.shape[0]
    m = float(v.min())
    if rho == 0.0:
        return P @ v, np.zeros(n)
    if rho >= 1.0:
        return np.full(n, m), np.full(n, m)
    order = np.argsort(v, kind="stable")
    eta = v[order]
    # prefix sums over ascending v give E_p[(eta_k - v)_+] at every kink
    Ps = P[:, order]
    g = eta[None, :] * np.cumsum(Ps, axis=1) - np.cumsum(Ps * eta[None, :], axis=1)
    g += (eta - m)[None, :] * rho - eta[None, :]
    k = np.argmin(g, axis=1)
    rows = np.arange(n)
    return -g[rows, k], eta[k]


def chi2_batch(P, v, rho, scale, tol, max_iter, grid):
    n = P.shape[0]
    if rho == 0.0:
        return P @ v, np.zeros(n), np.zeros(n, dtype=np.int64)
    C = math.sqrt(1.0 + rho)
    m, M = _support_min_max(P, v)
    spread = (M - m) if scale is None else np.full(n, float(scale))
    lo = m
    hi = m + C * spread / (C - 1.0)

    flat = (M - m) <= 0.0
    values = m.copy()
    duals = m.copy()
    evals = np.zeros(n, dtype=np.int64)
    todo = np.flatnonzero(~flat)
    if todo.size:
        Psub = P[todo]

        def fsub(x, rows):
            gap = np.maximum(x[:, :, None] - v[None, None, :], 0.0)
            second = np.einsum("nks,ns->nk", gap * gap, Psub[rows])
            return C * np.sqrt(second) - x

        x, fx, ev = _golden_batch(fsub, lo[todo], hi[todo], tol, max_iter, grid)
        values[todo] = -fx
        duals[todo] = x
        evals[todo] = ev
    return values, duals, evals


def kl_objective(P, v, rho, lam):
    """KL dual objective at ``lam`` (shape ``(n, k)``) for each row of ``P``.

    The moment is shifted by the support minimum so every exponent is
    non-positive; ``lam == 0`` returns the analytic limit ``-min_supp v``.
    """
    m, _ = _support_min_max(P, v)
    lam = np.asarray(lam, dtype=float)
    shifted = np.maximum(v[None, :] - m[:, None], 0.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = -shifted[:, None, :] / lam[:, :, None]
        s = np.einsum("nks,ns->nk", np.expm1(z), P)
        log_moment = np.log1p(s)
        small = s <= -0.5
        if np.any(small):
            # 1 + s has lost the digits of a tiny moment; sum it directly
            direct = np.log(np.einsum("nks,ns->nk", np.exp(z), P))
            log_moment = np.where(small, direct, log_moment)
        out = lam * rho + lam * log_moment - m[:, None]
    return np.where(lam > 0.0, out, -m[:, None])


def kl_batch(P, v, rho, scale, tol, max_iter, grid):
    n = P.shape[0]
    if rho == 0.0:
        return P @ v, np.zeros(n), np.zeros(n, dtype=np.int64)
    m, M = _support_min_max(P, v)
    mean = P @ v
    values = m.copy()
    duals = np.zeros(n)
    evals = np.zeros(n, dtype=np.int64)
    todo = np.flatnonzero((M - m) > 0.0)
    if todo.size:
        Psub = P[todo]
        if scale is None:
            hi = np.maximum(mean[todo] - m[todo], 0.0) / rho
        else:
            hi = np.full(todo.size, float(scale) / rho)
        lo = np.zeros(todo.size)
        x, fx, ev = _golden_batch(
            lambda lam, rows: kl_objective(Psub[rows], v, rho, lam), lo, hi, tol, max_iter, grid
        )
        values[todo] = -fx
        duals[todo] = x
        evals[todo] = ev
    return values, duals, evals


def lower_envelope(v, slopes):
    """Knots of ``lam -> min_j v[j] + lam * slopes[j]`` on ``[0, inf)``.

    Returns ``(xs, ys)`` with ``xs[0] == 0``; beyond the last knot the
    envelope is constant because some slope is zero (``d(s, s) = 0``).
    """
    order = np.lexsort((slopes, v))
    k = int(order[0])
    lam = 0.0
    xs = [0.0]
    ys = [float(v[k])]
    while True:
        below = np.flatnonzero(slopes < slopes[k])
        if below.size == 0:
            break
        cross = (v[below] - v[k]) / (slopes[k] - slopes[below])
        best = cross.min()
        tied = below[cross == best]
        j = int(tied[np.argmin(slopes[tied])])
        lam = max(float(best), lam)
        k = j
        y = float(v[k] + lam * slopes[k])
        if lam == xs[-1]:
            ys[-1] = y
        else:
            xs.append(lam)
            ys.append(y)
    return np.array(xs), np.array(ys)


def wass_batch(P, v, cost, radius_pow, scale):
    """Exact Wasserstein worst-case expectation for every row of ``P``.

    ``cost[i, j]`` is ``d(i, j) ** p`` and ``radius_pow`` is ``rho ** p``.
    The dual objective is concave piecewise linear in the multiplier, so it
    is maximized over the union of the envelope knots of the support columns.
    """
    n, S = P.shape
    m = float(v.min())
    env = [lower_envelope(v, cost[:, t]) for t in range(S)]
    mean = P @ v
    values = np.empty(n)
    duals = np.empty(n)
    evals = np.empty(n, dtype=np.int64)
    for r in range(n):
        supp = np.flatnonzero(P[r] > 0.0)
        if scale is None:
            hi = max(mean[r] - m, 0.0) / radius_pow
        else:
            hi = float(scale) / radius_pow
        pieces = [np.array([0.0, hi])]
        for t in supp:
            xs = env[t][0]
            pieces.append(xs[(xs > 0.0) & (xs < hi)])
        cand = np.unique(np.concatenate(pieces))
        F = -cand * radius_pow
        for t in supp:
            F = F + P[r, t] * np.interp(cand, env[t][0], env[t][1])
        k = int(np.argmax(F))
        values[r] = F[k]
        duals[r] = cand[k]
        evals[r] = cand.size
    return values, duals, evals


# --- brute-force simplex grid oracle -------------------------------------------------


def lattice_axes(p, v, step):
    """Coordinate values of the simplex grid anchored at ``p``.

    The lowest-value state (first on ties) is the free coordinate that takes
    the leftover mass.  Every other coordinate ``j`` ranges over
    ``p[j] + k * step`` inside ``[0, 1]``, plus an exact 0, so ``p`` itself and
    the faces of the simplex are grid points.  Returns ``(free, axes)``.
    """
    free = int(np.argmin(v))
    axes = []
    for j in range(p.shape[0]):
        if j == free:
            continue
        r = p[j] - math.floor(p[j] / step) * step
        if r >= step * (1.0 - 1e-9):
            r = 0.0
        k = int(math.floor((1.0 - r) / step + 1e-9))
        axis = r + step * np.arange(k + 1)
        if r > 0.0:
            axis = np.concatenate([[0.0], axis])
        axes.append(axis)
    return free, axes


def _lattice_chunks(axes, budget=1.0):
    """Yield rows of coordinate values (one per axis) summing to at most ``budget``."""
    limit = budget + LATTICE_SLACK
    if len(axes) == 1:
        a = axes[0]
        yield a[a <= limit][:, None]
        return
    for x in axes[0]:
        if x > limit:
            break
        for sub in _lattice_chunks(axes[1:], budget - x):
            yield np.concatenate([np.full((sub.shape[0], 1), x), sub], axis=1)


def _monotone_cost(Q, p, pos, ppow):
    """Transport cost of the monotone coupling between rows of ``Q`` and ``p``."""
    order = np.argsort(pos, kind="stable")
    x = pos[order]
    Q = Q[:, order]
    p = p[order]
    M, S = Q.shape
    i = np.zeros(M, dtype=np.int64)
    j = np.zeros(M, dtype=np.int64)
    a = Q[:, 0].copy()
    b = np.full(M, p[0])
    cost = np.zeros(M)
    rows = np.arange(M)
    for _ in range(2 * S):
        live = (i < S) & (j < S)
        if not live.any():
            break
        ii = np.minimum(i, S - 1)
        jj = np.minimum(j, S - 1)
        c = np.abs(x[ii] - x[jj]) ** ppow
        take_a = live & (a < b)
        take_b = live & ~(a < b)
        cost += np.where(take_a, a * c, 0.0) + np.where(take_b, b * c, 0.0)
        b = np.where(take_a, b - a, b)
        a = np.where(take_b, a - b, a)
        i = np.where(take_a, i + 1, i)
        j = np.where(take_b, j + 1, j)
        a = np.where(take_a, Q[rows, np.minimum(i, S - 1)], a)
        b = np.where(take_b, p[np.minimum(j, S - 1)], b)
    return cost


def simplex_grid_min(kind, p, v, rho, step, positions=None, ppow=1.0):
    """Minimum of ``q @ v`` over the grid points ``q`` of :func:`lattice_axes` within the ball."""
    S = p.shape[0]
    free, axes = lattice_axes(p, v, step)
    others = [j for j in range(S) if j != free]
    best = np.inf
    for part in _lattice_chunks(axes):
        Q = np.empty((part.shape[0], S))
        Q[:, others] = part
        Q[:, free] = np.maximum(1.0 - part.sum(axis=1), 0.0)
        if kind == KIND_TV:
            div = 0.5 * np.abs(Q - p).sum(axis=1)
            bound = rho
        elif kind == KIND_CHI2:
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(p > 0.0, (Q - p) ** 2 / p, np.where(Q > 0.0, np.inf, 0.0))
            div = terms.sum(axis=1)
            bound = rho
        elif kind == KIND_KL:
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(
                    Q > 0.0,
                    np.where(p > 0.0, Q * np.log(Q / p), np.inf),
                    0.0,
                )
            div = terms.sum(axis=1)
            bound = rho
        else:
            div = _monotone_cost(Q, p, positions, ppow)
            bound = rho**ppow
        feas = div <= bound + _FEAS_SLACK
        if feas.any():
            best = min(best, float((Q[feas] @ v).min()))
    return best
