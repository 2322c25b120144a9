import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpvl.core import DistanceMetric, UncertaintySpec
from rpvl.duals import (
    SolverConfig,
    batch_inner,
    inner,
    inner_chi2,
    inner_kl,
    inner_tv,
    inner_wasserstein,
    kl_dual_objective,
    oracle_simplex_grid,
    oracle_tv_primal,
    oracle_wasserstein_lp,
)

from helpers import random_pv

THIRD = np.full(3, 1 / 3)
V012 = np.array([0.0, 1.0, 2.0])
# grid-oracle value (step 1e-4) for p=[0.5, 0.5], v=[0, 1], rho=0.5, frozen
KL_GOLDEN = 0.0482


def _solve(kind, p, v, rho):
    if kind == "wasserstein":
        return inner_wasserstein(p, v, rho).value
    return {"tv": inner_tv, "chi2": inner_chi2, "kl": inner_kl}[kind](p, v, rho).value


KINDS = ["tv", "chi2", "kl", "wasserstein"]


def test_tv_reference_instance():
    assert inner_tv(THIRD, V012, 0.3).value == pytest.approx(0.4, abs=1e-12)
    assert oracle_tv_primal(THIRD, V012, 0.3) == pytest.approx(0.4, abs=1e-12)


def test_tv_limits():
    p = np.array([0.2, 0.5, 0.3])
    assert inner_tv(p, V012, 0.0).value == pytest.approx(p @ V012)
    sol = inner_tv(p, V012, 1.0)
    assert sol.value == 0.0 and sol.evaluations == 0


def test_chi2_reference_instance():
    assert inner_chi2([0.5, 0.5], [0.0, 1.0], 1.0).value == pytest.approx(0.0, abs=1e-9)
    assert oracle_simplex_grid("chi2", [0.5, 0.5], [0.0, 1.0], 1.0, 1e-4) == pytest.approx(0.0, abs=1e-4)


def test_chi2_uses_positive_part():
    # without the positive part the dual would report a value below min v here
    val = inner_chi2(THIRD, V012, 3.0).value
    assert val >= -1e-12
    assert val == pytest.approx(oracle_simplex_grid("chi2", THIRD, V012, 3.0, 1e-3), abs=2e-3)


def test_kl_golden():
    sol = inner_kl([0.5, 0.5], [0.0, 1.0], 0.5)
    assert sol.value == pytest.approx(KL_GOLDEN, abs=1e-3)
    assert oracle_simplex_grid("kl", [0.5, 0.5], [0.0, 1.0], 0.5, 1e-4) == pytest.approx(KL_GOLDEN, abs=1e-4)


def test_kl_huge_radius_reaches_support_min():
    p = np.array([0.0, 0.4, 0.6])
    v = np.array([-5.0, 2.0, 7.0])
    assert inner_kl(p, v, 1e6).value == pytest.approx(2.0, abs=1e-6)


def test_wasserstein_reference_instance():
    sol = inner_wasserstein([0.0, 0.0, 1.0], V012, 1.0)
    assert sol.value == pytest.approx(1.0, abs=1e-12)
    assert sol.dual_var == pytest.approx(1.0)
    assert oracle_wasserstein_lp([0.0, 0.0, 1.0], V012, 1.0) == pytest.approx(1.0, abs=1e-9)


def test_wasserstein_radius_past_diameter():
    p = np.array([0.1, 0.6, 0.3])
    assert inner_wasserstein(p, V012, 2.0).value == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_constant_values(kind):
    p = np.array([0.1, 0.6, 0.3])
    assert _solve(kind, p, np.full(3, 3.5), 0.4) == pytest.approx(3.5, abs=1e-9)


@pytest.mark.parametrize("kind", ["tv", "chi2", "kl"])
def test_zero_radius_is_expectation(kind):
    p = np.array([0.1, 0.6, 0.3])
    assert _solve(kind, p, V012, 0.0) == pytest.approx(p @ V012, abs=1e-12)


def test_dispatch_matches_direct_solvers():
    p, v = np.array([0.5, 0.5]), np.array([0.0, 1.0])
    assert inner(UncertaintySpec("kl", 0.5), p, v).value == inner_kl(p, v, 0.5).value
    assert inner(UncertaintySpec("tv", 0.0), p, v).value == pytest.approx(0.5)
    with pytest.raises(ValueError):
        inner(UncertaintySpec("wasserstein", 0.0), p, v)


def test_input_validation():
    with pytest.raises(ValueError, match="length mismatch"):
        inner_tv([0.5, 0.5], [1.0], 0.1)
    with pytest.raises(ValueError, match="probability"):
        inner_tv([0.5, 0.6], [1.0, 2.0], 0.1)
    with pytest.raises(ValueError):
        inner_kl([0.5, 0.5], [0.0, np.inf], 0.1)
    with pytest.raises(ValueError):
        inner_chi2([0.5, 0.5], [0.0, 1.0], -1.0)
    with pytest.raises(ValueError):
        inner_wasserstein([0.5, 0.5], [0.0, 1.0], 0.1, metric=DistanceMetric.line(3))
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=5)


def test_h_bound_below_spread_rejected():
    with pytest.raises(ValueError, match="h_bound"):
        inner_kl([0.5, 0.5], [0.0, 10.0], 0.1, h_bound=5.0)


def test_h_bound_bracket_agrees_with_default(rng):
    for _ in range(50):
        p, v = random_pv(rng, 5)
        for fn in (inner_chi2, inner_kl):
            a = fn(p, v, 0.3).value
            b = fn(p, v, 0.3, h_bound=50.0).value
            assert a == pytest.approx(b, abs=1e-7)
        a = inner_wasserstein(p, v, 0.7).value
        b = inner_wasserstein(p, v, 0.7, h_bound=50.0).value
        assert a == pytest.approx(b, abs=1e-9)


def test_tv_matches_greedy_oracle(rng):
    for _ in range(300):
        S = int(rng.integers(1, 9))
        p, v = random_pv(rng, S, sparse=True)
        rho = float(rng.uniform(0, 1))
        assert inner_tv(p, v, rho).value == pytest.approx(oracle_tv_primal(p, v, rho), abs=1e-9)


def test_wasserstein_matches_lp(rng):
    for _ in range(60):
        S = int(rng.integers(2, 7))
        p, v = random_pv(rng, S, sparse=True)
        rho = float(rng.uniform(0.05, 3.0))
        ppow = int(rng.integers(1, 3))
        pts = np.sort(rng.uniform(0, 4, size=S))
        metric = DistanceMetric.from_positions(pts)
        got = inner_wasserstein(p, v, rho, ppow, metric).value
        assert got == pytest.approx(oracle_wasserstein_lp(p, v, rho, ppow, metric), abs=1e-7)


def test_wasserstein_general_metric_matches_lp(rng):
    # a metric that does not come from points on a line
    for _ in range(30):
        pts = rng.uniform(0, 3, size=(4, 2))
        d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        metric = DistanceMetric(d)
        p, v = random_pv(rng, 4)
        got = inner_wasserstein(p, v, 0.8, 1, metric).value
        assert got == pytest.approx(oracle_wasserstein_lp(p, v, 0.8, 1, metric), abs=1e-7)
    with pytest.raises(ValueError, match="positions"):
        oracle_simplex_grid("wasserstein", p, v, 0.8, 1e-2, metric=metric)


@pytest.mark.parametrize("kind", ["chi2", "kl", "wasserstein"])
def test_grid_oracle_agreement(kind, rng):
    for _ in range(10):
        S = int(rng.integers(2, 4))
        p, v = random_pv(rng, S)
        rho = float(rng.uniform(0.05, 1.0))
        got = _solve(kind, p, v, rho)
        ref = oracle_simplex_grid(kind, p, v, rho, 1e-3)
        span = v.max() - v.min()
        # the grid can only miss the optimum by about one cell
        assert got <= ref + 1e-9
        assert got >= ref - 1e-3 * span * S - 1e-6


def test_grid_oracle_near_zero_radius(rng):
    p = np.array([0.25, 0.35, 0.4])
    for kind in KINDS:
        ref = oracle_simplex_grid(kind, p, V012, 1e-9, 1e-2)
        assert ref == pytest.approx(p @ V012, abs=1e-2 * 2)


def test_grid_oracle_preconditions():
    with pytest.raises(ValueError):
        oracle_simplex_grid("kl", np.full(5, 0.2), np.arange(5.0), 0.1, 1e-2)
    with pytest.raises(ValueError):
        oracle_simplex_grid("kl", [0.5, 0.5], [0.0, 1.0], 0.1, 0.05)


def test_kl_objective_probes_are_finite(rng):
    lam = np.logspace(-12, 3, 40)
    for _ in range(50):
        p, v = random_pv(rng, 6, sparse=True)
        vals = kl_dual_objective(p, v, 0.3, lam)
        assert np.all(np.isfinite(vals))
        support_min = v[p > 0].min()
        # as lam -> 0 the objective tends to -min over the support
        assert vals[0] == pytest.approx(-support_min, abs=1e-9)


def test_batch_matches_scalar(rng):
    P = rng.dirichlet(np.ones(6), size=30)
    v = rng.uniform(0, 10, size=6)
    for kind in KINDS:
        spec = UncertaintySpec(kind, 0.3)
        vals, duals, evals = batch_inner(spec, P, v)
        assert vals.shape == duals.shape == evals.shape == (30,)
        for i in (0, 7, 29):
            assert vals[i] == inner(spec, P[i], v).value


# --- properties ---------------------------------------------------------------------


@st.composite
def instances(draw, max_states=6):
    S = draw(st.integers(1, max_states))
    w = draw(st.lists(st.floats(0.0, 1.0), min_size=S, max_size=S))
    if sum(w) == 0:
        w[0] = 1.0
    p = np.array(w) / sum(w)
    v = np.array(draw(st.lists(st.floats(0.0, 50.0), min_size=S, max_size=S)))
    rho = draw(st.floats(0.01, 2.0))
    return p, v, rho


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=150, deadline=None)
@given(inst=instances(), shift=st.floats(-20.0, 20.0))
def test_sandwich_and_translation(kind, inst, shift):
    p, v, rho = inst
    val = _solve(kind, p, v, rho)
    assert v.min() - 1e-9 <= val <= p @ v + 1e-9
    moved = _solve(kind, p, v + shift, rho)
    assert moved == pytest.approx(val + shift, abs=1e-7)


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=100, deadline=None)
@given(inst=instances(), scale=st.floats(1.05, 4.0))
def test_monotone_in_radius(kind, inst, scale):
    p, v, rho = inst
    assert _solve(kind, p, v, rho * scale) <= _solve(kind, p, v, rho) + 1e-9


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=100, deadline=None)
@given(inst=instances(), noise=st.lists(st.floats(-5.0, 5.0), min_size=6, max_size=6))
def test_nonexpansive(kind, inst, noise):
    p, v, rho = inst
    v2 = np.clip(v + np.array(noise[: v.size]), 0.0, 50.0)
    diff = abs(_solve(kind, p, v, rho) - _solve(kind, p, v2, rho))
    assert diff <= np.max(np.abs(v - v2)) + 1e-9


@settings(max_examples=150, deadline=None)
@given(inst=instances())
def test_kl_stays_on_support(inst):
    p, v, rho = inst
    assert inner_kl(p, v, rho * 100).value >= v[p > 0].min() - 1e-9
