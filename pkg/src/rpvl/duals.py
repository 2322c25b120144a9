"""Worst-case expectations over divergence balls, solved through their duals.

For a nominal distribution ``p`` and values ``v`` each operator returns
``inf { q @ v : D(q, p) <= rho }``.  The dual problems are one-dimensional:

* TV: ``-min_eta E_p[(eta - v)_+] + (eta - min v)_+ * rho - eta``, convex
  piecewise linear in ``eta`` and minimized exactly over its kinks.
* chi-square: ``-min_eta C * sqrt(E_p[(eta - v)_+^2]) - eta`` with
  ``C = sqrt(1 + rho)``, minimized by grid-seeded golden-section search.
* KL: ``-min_lam lam * rho + lam * log E_p[exp(-v / lam)]``, same search, with
  the ``lam -> 0`` limit taken analytically as ``-min_{supp p} v``.
* Wasserstein (transport cost ``d^p``, budget ``rho^p``):
  ``max_lam E_p[min_s (v(s) + lam * d^p(s, .))] - lam * rho^p``, concave piecewise
  linear and maximized exactly over the knots of the inner envelopes.

The ``batch_*`` entry points solve one phase worth of rows at once through
the kernel backend; the scalar functions wrap them for single instances.
The ``oracle_*`` functions solve the primal problems by independent routes
and exist to check the duals.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from rpvl import kernels as _kernels
from rpvl.core import DistanceMetric, DivergenceKind, DualSolution, UncertaintySpec

SIMPLEX_TOL = 1e-9

_KIND_CODE = {
    DivergenceKind.TV: 0,
    DivergenceKind.CHI2: 1,
    DivergenceKind.KL: 2,
    DivergenceKind.WASSERSTEIN: 3,
}


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the scalar dual searches (chi-square and KL).

    ``tol`` is the final bracket width on the dual variable and ``grid_seeds``
    the number of coarse points used to pick the starting bracket.
    """

    tol: float = 1e-9
    max_iter: int = 200
    grid_seeds: int = 32

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 10:
            raise ValueError("max_iter must be at least 10")
        if self.grid_seeds < 3:
            raise ValueError("grid_seeds must be at least 3")


DEFAULT_CONFIG = SolverConfig()


def _check_pv(p, v):
    p = np.ascontiguousarray(p, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if p.ndim != 1 or p.shape != v.shape:
        raise ValueError(f"length mismatch: p has shape {p.shape}, v has shape {v.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError("p must be a probability vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("v must be finite")
    return p, v


def _check_batch(P, v):
    P = np.ascontiguousarray(P, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if P.ndim != 2 or v.ndim != 1 or P.shape[1] != v.shape[0]:
        raise ValueError(f"shape mismatch: P {P.shape}, v {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("v must be finite")
    return P, v


def _scale(v, h_bound):
    if h_bound is None:
        return None
    spread = float(v.max() - v.min()) if v.size else 0.0
    if h_bound < spread:
        raise ValueError(f"h_bound={h_bound} is below the spread of v ({spread})")
    return float(h_bound)


def _check_rho(rho):
    rho = float(rho)
    if not np.isfinite(rho) or rho < 0:
        raise ValueError(f"radius must be a nonnegative finite number, got {rho}")
    return rho


def batch_tv(P, v, rho, backend=None):
    P, v = _check_batch(P, v)
    be = _kernels.get_backend(backend)
    values, duals = be.tv_batch(P, v, _check_rho(rho))
    evals = np.full(P.shape[0], 0 if rho == 0 or rho >= 1 else v.size, dtype=np.int64)
    return values, duals, evals


def batch_chi2(P, v, rho, cfg=DEFAULT_CONFIG, h_bound=None, backend=None):
    P, v = _check_batch(P, v)
    be = _kernels.get_backend(backend)
    return be.chi2_batch(
        P, v, _check_rho(rho), _scale(v, h_bound), cfg.tol, cfg.max_iter, cfg.grid_seeds
    )


def batch_kl(P, v, rho, cfg=DEFAULT_CONFIG, h_bound=None, backend=None):
    P, v = _check_batch(P, v)
    be = _kernels.get_backend(backend)
    return be.kl_batch(
        P, v, _check_rho(rho), _scale(v, h_bound), cfg.tol, cfg.max_iter, cfg.grid_seeds
    )


def batch_wasserstein(P, v, rho, ppow=1, metric=None, h_bound=None, backend=None):
    P, v = _check_batch(P, v)
    rho = _check_rho(rho)
    if rho == 0:
        raise ValueError(
            "Wasserstein radius must be positive; use the nominal expectation for rho = 0"
        )
    if metric is None:
        metric = DistanceMetric.line(v.size)
    if metric.num_states != v.size:
        raise ValueError("metric size does not match the value vector")
    cost = np.ascontiguousarray(metric.cost(ppow))
    be = _kernels.get_backend(backend)
    return be.wass_batch(P, v, cost, rho**ppow, _scale(v, h_bound))


def batch_inner(spec: UncertaintySpec, P, v, cfg=DEFAULT_CONFIG, h_bound=None, backend=None):
    """Inner worst-case values for every row of ``P`` under ``spec``.

    Returns ``(values, dual_vars, evaluations)`` arrays.
    """
    kind = spec.kind
    if kind is DivergenceKind.TV:
        return batch_tv(P, v, spec.rho, backend=backend)
    if kind is DivergenceKind.CHI2:
        return batch_chi2(P, v, spec.rho, cfg, h_bound, backend=backend)
    if kind is DivergenceKind.KL:
        return batch_kl(P, v, spec.rho, cfg, h_bound, backend=backend)
    if kind is DivergenceKind.WASSERSTEIN:
        metric = spec.metric_for(np.shape(v)[0])
        return batch_wasserstein(P, v, spec.rho, spec.p, metric, h_bound, backend=backend)
    raise ValueError(f"unknown divergence kind {kind!r}")


def _single(result) -> DualSolution:
    values, duals, evals = result
    return DualSolution(dual_var=float(duals[0]), value=float(values[0]), evaluations=int(evals[0]))


def inner_tv(p, v, rho, cfg=DEFAULT_CONFIG, h_bound=None) -> DualSolution:
    p, v = _check_pv(p, v)
    return _single(batch_tv(p[None, :], v, rho))


def inner_chi2(p, v, rho, cfg=DEFAULT_CONFIG, h_bound=None) -> DualSolution:
    p, v = _check_pv(p, v)
    return _single(batch_chi2(p[None, :], v, rho, cfg, h_bound))


def inner_kl(p, v, rho, cfg=DEFAULT_CONFIG, h_bound=None) -> DualSolution:
    p, v = _check_pv(p, v)
    return _single(batch_kl(p[None, :], v, rho, cfg, h_bound))


def inner_wasserstein(p, v, rho, ppow=1, metric=None, cfg=DEFAULT_CONFIG, h_bound=None):
    p, v = _check_pv(p, v)
    return _single(batch_wasserstein(p[None, :], v, rho, ppow, metric, h_bound))


def inner(spec: UncertaintySpec, p, v, cfg=DEFAULT_CONFIG, h_bound=None) -> DualSolution:
    p, v = _check_pv(p, v)
    return _single(batch_inner(spec, p[None, :], v, cfg, h_bound))


def kl_dual_objective(p, v, rho, lam) -> np.ndarray:
    """KL dual objective ``lam * rho + lam * log E_p exp(-v / lam)`` at each ``lam``."""
    p, v = _check_pv(p, v)
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if np.any(lam < 0):
        raise ValueError("lam must be nonnegative")
    return _kernels.backend.kl_objective(p[None, :], v, float(rho), lam[None, :])[0]


# --- primal oracles ------------------------------------------------------------------


def oracle_tv_primal(p, v, rho) -> float:
    """Exact TV worst case by greedy mass transport.

    Mass ``min(rho, 1 - p[target])`` is taken from the highest-value states
    first and placed on the lowest-value state.
    """
    p, v = _check_pv(p, v)
    rho = _check_rho(rho)
    q = p.copy()
    target = int(np.argmin(v))
    budget = min(rho, 1.0 - q[target])
    for s in np.argsort(-v, kind="stable"):
        if budget <= 0:
            break
        if s == target:
            continue
        moved = min(budget, q[s])
        q[s] -= moved
        q[target] += moved
        budget -= moved
    return float(q @ v)


def oracle_simplex_grid(kind, p, v, rho, step, ppow=1, metric=None, backend=None) -> float:
    """Brute-force minimum of ``q @ v`` over a simplex grid of resolution ``step``.

    The grid is anchored at ``p``: coordinates move in multiples of ``step``
    away from ``p`` (or sit at exactly 0), and the lowest-value state absorbs
    the remainder.  ``p`` is therefore a grid point and the result is an upper
    bound on the true minimum that is within about one grid cell of it.
    Every grid point inside the divergence ball is enumerated (up to four
    states).  For Wasserstein balls the transport cost is that of the
    monotone coupling, which is optimal for metrics induced by positions on a
    line; other metrics need :func:`oracle_wasserstein_lp`.
    """
    kind = DivergenceKind.parse(kind) if isinstance(kind, str) else kind
    p, v = _check_pv(p, v)
    rho = _check_rho(rho)
    if not 2 <= p.size <= 4:
        raise ValueError(f"grid oracle supports 2 to 4 states, got {p.size}")
    if step > 1e-2 or step <= 0:
        raise ValueError("step must lie in (0, 1e-2]")
    positions = None
    if kind is DivergenceKind.WASSERSTEIN:
        metric = metric if metric is not None else DistanceMetric.line(p.size)
        if metric.positions is None:
            raise ValueError("grid oracle needs a metric given by positions on a line")
        positions = np.asarray(metric.positions, dtype=np.float64)
    be = _kernels.get_backend(backend)
    return float(
        be.simplex_grid_min(_KIND_CODE[kind], p, v, rho, float(step), positions, float(ppow))
    )


def oracle_wasserstein_lp(p, v, rho, ppow=1, metric: Optional[DistanceMetric] = None) -> float:
    """Wasserstein worst case as a transport linear program over couplings.

    Solves ``min sum_ij pi_ij v_i`` subject to ``sum_i pi_ij = p_j``,
    ``sum_ij pi_ij d(i, j)^p <= rho^p`` and ``pi >= 0``.
    """
    from scipy.optimize import linprog

    p, v = _check_pv(p, v)
    S = p.size
    metric = metric if metric is not None else DistanceMetric.line(S)
    cost = metric.cost(ppow)
    c = np.repeat(v, S)  # pi[i, j] flattened row-major, i = destination
    A_eq = np.zeros((S, S * S))
    for j in range(S):
        A_eq[j, j::S] = 1.0
    res = linprog(
        c,
        A_ub=cost.reshape(1, -1),
        b_ub=[float(rho) ** ppow],
        A_eq=A_eq,
        b_eq=p,
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)
