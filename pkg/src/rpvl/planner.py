"""Robust dynamic programming, robust phased value learning and evaluation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from rpvl.core import Policy, TabularModel, UncertaintySpec, ValueFunction, greedy_value_backup
from rpvl.duals import DEFAULT_CONFIG, SolverConfig, batch_inner
from rpvl.sampling import EmpiricalModel, GenerativeModel, SampleBudget, mle_estimate


@dataclass(frozen=True, eq=False)
class PlanResult:
    policy: Policy
    values: ValueFunction
    evaluations: np.ndarray  # inner dual-objective evaluations per phase
    wall_time: np.ndarray  # seconds per phase
    empirical: Optional[EmpiricalModel] = field(default=None)

    @property
    def total_evaluations(self) -> int:
        return int(self.evaluations.sum())


class _Inner:
    """Phase inner-problem evaluator that tallies dual-objective calls."""

    def __init__(self, spec, cfg, backend):
        self.spec = spec
        self.cfg = cfg
        self.backend = backend
        self.evaluations = 0

    def __call__(self, P, v):
        if self.spec is None:
            return P @ v
        values, _, evals = batch_inner(self.spec, P, v, self.cfg, backend=self.backend)
        self.evaluations += int(evals.sum())
        return values


def robust_dp(
    model: TabularModel,
    spec: Optional[UncertaintySpec],
    cfg: SolverConfig = DEFAULT_CONFIG,
    backend=None,
) -> PlanResult:
    """Backward induction with the robust Bellman optimality operator.

    ``spec=None`` runs the classical (non-robust) recursion on ``model``.
    """
    H, S = model.horizon, model.num_states
    V = np.zeros((H + 1, S))
    decisions = np.zeros((H, S), dtype=np.int64)
    evals = np.zeros(H, dtype=np.int64)
    wall = np.zeros(H)
    for h in range(H - 1, -1, -1):
        t0 = time.perf_counter()
        inner = _Inner(spec, cfg, backend)
        V[h], decisions[h] = greedy_value_backup(model, h, V[h + 1], inner)
        evals[h] = inner.evaluations
        wall[h] = time.perf_counter() - t0
    return PlanResult(Policy(decisions), ValueFunction(V), evals, wall)


def rpvl(
    gm: GenerativeModel,
    budget: SampleBudget,
    spec: Optional[UncertaintySpec],
    cfg: SolverConfig = DEFAULT_CONFIG,
    backend=None,
) -> PlanResult:
    """Robust phased value learning.

    Estimates each phase's kernels from its own ``N`` samples per triple and
    runs robust backward induction on balls centred at the estimates.
    """
    emp = mle_estimate(gm, budget)
    plan = robust_dp(emp.model, spec, cfg, backend=backend)
    return PlanResult(plan.policy, plan.values, plan.evaluations, plan.wall_time, emp)


def evaluate_robust(
    policy: Policy,
    model: TabularModel,
    spec: Optional[UncertaintySpec],
    cfg: SolverConfig = DEFAULT_CONFIG,
    backend=None,
) -> ValueFunction:
    """Worst-case value of ``policy`` over the ball around ``model``."""
    rows = policy.rows(model)
    H, S = model.horizon, model.num_states
    V = np.zeros((H + 1, S))
    inner = _Inner(spec, cfg, backend)
    for h in range(H - 1, -1, -1):
        r = rows[h]
        V[h] = model.reward[h, r] + inner(model.kernels[h, r], V[h + 1])
    return ValueFunction(V)


def evaluate_under(policy: Policy, test_model: TabularModel) -> ValueFunction:
    """Expected return of ``policy`` when transitions follow ``test_model``."""
    return evaluate_robust(policy, test_model, None)


def suboptimality_gap(vstar: ValueFunction, vpi: ValueFunction) -> float:
    """Max-norm distance between the first-phase value rows."""
    a, b = vstar.first(), vpi.first()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0
