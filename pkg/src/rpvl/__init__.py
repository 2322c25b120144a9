"""Robust planning and sample-based learning for tabular finite-horizon MDPs."""
from rpvl.core import (
    DistanceMetric,
    DivergenceKind,
    DualSolution,
    ModelViolation,
    Policy,
    TabularModel,
    UncertaintySpec,
    ValueFunction,
    check_model,
    expectation,
    greedy_value_backup,
    validate_model,
)
from rpvl.duals import (
    SolverConfig,
    inner,
    inner_chi2,
    inner_kl,
    inner_tv,
    inner_wasserstein,
    oracle_simplex_grid,
    oracle_tv_primal,
    oracle_wasserstein_lp,
)
from rpvl.gamblers import GamblersConfig, build_gamblers, gamblers_metric, perturb
from rpvl.kernels import BACKEND_NAME
from rpvl.planner import (
    PlanResult,
    evaluate_robust,
    evaluate_under,
    robust_dp,
    rpvl,
    suboptimality_gap,
)
from rpvl.sampling import EmpiricalModel, GenerativeModel, SampleBudget, mle_estimate, sample_next_state

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
