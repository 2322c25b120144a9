"""Acceptance criteria, one check per criterion.

Each check prints a ``CRITERION <id> PASS|FAIL`` line (also collected into
the pytest terminal summary).  Run the module directly to get only those
lines: ``python tests/test_acceptance.py``.
"""
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from rpvl.core import UncertaintySpec
from rpvl.duals import (
    inner_chi2,
    inner_kl,
    inner_tv,
    inner_wasserstein,
    kl_dual_objective,
    oracle_simplex_grid,
    oracle_tv_primal,
)
from rpvl.experiments import ExperimentConfig, run_sweep_n, run_sweep_rho, run_sweep_test_p
from rpvl.gamblers import build_gamblers, gamblers_metric
from rpvl.planner import robust_dp

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []

SOLVERS = {
    "tv": lambda p, v, rho: inner_tv(p, v, rho).value,
    "chi2": lambda p, v, rho: inner_chi2(p, v, rho).value,
    "kl": lambda p, v, rho: inner_kl(p, v, rho).value,
    "wasserstein": lambda p, v, rho: inner_wasserstein(p, v, rho).value,
}

# Small-radius check for chi-square and KL: both operators move away from the
# nominal expectation like sqrt(rho), so at rho = 1e-10 the gamblers values
# shift by about 3e-5, above the 1e-6 tolerance.  The deviation matches the
# closed form of the two-point problem (see test_small_radius_closed_form).
SQRT_RHO_REASON = "deviation at rho=1e-10 is of order sqrt(rho), about 3e-5, above the 1e-6 tolerance"


def record(cid, ok, detail):
    line = f"CRITERION {cid} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def _instance(rng, S, vmax=50.0):
    p = rng.dirichlet(np.ones(S))
    return p, rng.uniform(0.0, vmax, size=S)


# --- 1 ----------------------------------------------------------------------------


def check_tv_duality():
    rng = np.random.default_rng(1)
    cases = []
    for _ in range(200):
        S = int(rng.integers(1, 9))
        p, v = _instance(rng, S)
        cases.append((p, v, float(1.0 - rng.random())))  # rho in (0, 1]
    t0 = time.perf_counter()
    worst = max(abs(inner_tv(p, v, rho).value - oracle_tv_primal(p, v, rho)) for p, v, rho in cases)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 2.0
    return record("1", ok, f"TV dual vs greedy primal, max err {worst:.2e}, {elapsed:.2f}s")


def test_criterion_1_tv_duality():
    assert check_tv_duality()


# --- 2 ----------------------------------------------------------------------------


def check_grid_duality():
    rng = np.random.default_rng(2)
    worst_ratio = 0.0
    worst = ""
    t0 = time.perf_counter()
    for i in range(50):
        S = 2 + i % 2
        p, v = _instance(rng, S)
        rho = float(rng.uniform(0.05, 1.0))
        span = float(v.max() - v.min())
        tol = 1e-4 * span + 1e-6
        for kind in ("chi2", "kl", "wasserstein"):
            err = abs(SOLVERS[kind](p, v, rho) - oracle_simplex_grid(kind, p, v, rho, 1e-4))
            if err / tol > worst_ratio:
                worst_ratio, worst = err / tol, f"{kind} err {err:.2e} vs tol {tol:.2e}"
    elapsed = time.perf_counter() - t0
    ok = worst_ratio <= 1.0 and elapsed < 60.0
    return record("2", ok, f"chi2/KL/W duals vs grid oracle, worst {worst}, {elapsed:.1f}s")


def test_criterion_2_grid_duality():
    assert check_grid_duality()


# --- 3 ----------------------------------------------------------------------------

_GAMBLERS = {}


def _gamblers_classical():
    if not _GAMBLERS:
        model = build_gamblers()
        _GAMBLERS["model"] = model
        _GAMBLERS["classical"] = robust_dp(model, None).values.values
    return _GAMBLERS["model"], _GAMBLERS["classical"]


def check_small_radius(kind):
    model, classical = _gamblers_classical()
    metric = gamblers_metric() if kind == "wasserstein" else None
    V = robust_dp(model, UncertaintySpec(kind, 1e-10, metric=metric)).values.values
    err = float(np.max(np.abs(V - classical)))
    detail = f"{kind} rho=1e-10 vs classical, max err {err:.2e}"
    ok = err <= 1e-6
    if kind == "wasserstein":
        # radius 0 is rejected by the dual and handled as the plain expectation
        try:
            UncertaintySpec(kind, 0.0)
            rejected = False
        except ValueError:
            rejected = True
        bypass = float(np.max(np.abs(robust_dp(model, None).values.values - classical)))
        ok = ok and rejected and bypass == 0.0
        detail += f"; rho=0 rejected={rejected}, nominal bypass err {bypass:.1e}"
    return record(f"3-{kind}", ok, detail)


@pytest.mark.parametrize(
    "kind",
    [
        "tv",
        pytest.param("chi2", marks=pytest.mark.xfail(strict=True, reason=SQRT_RHO_REASON)),
        pytest.param("kl", marks=pytest.mark.xfail(strict=True, reason=SQRT_RHO_REASON)),
        "wasserstein",
    ],
)
def test_criterion_3_small_radius(kind):
    assert check_small_radius(kind)


def test_small_radius_closed_form():
    """The chi-square deviation above is the true operator value, not solver error.

    For a two-point row ``p = (1 - q, q)`` on values ``a <= b`` the chi-square
    worst case lowers the expectation by ``sqrt(rho * q * (1 - q)) * (b - a)``
    until the lower state is saturated.
    """
    model, classical = _gamblers_classical()
    rho = 1e-10
    H, S = model.horizon, model.num_states
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        v = V[h + 1]
        P = model.kernels[h]
        mean = P @ v
        lo = np.where(P > 0, v[None, :], np.inf).min(axis=1)
        hi = np.where(P > 0, v[None, :], -np.inf).max(axis=1)
        q_hi = np.where(P > 0, P * (v[None, :] == hi[:, None]), 0).sum(axis=1)
        q = np.where(hi > lo, q_hi, 0.0)
        worst = np.maximum(mean - np.sqrt(rho * q * (1 - q)) * (hi - lo), lo)
        Q = model.reward[h] + worst
        V[h] = np.maximum.reduceat(Q, model.offsets[:-1])
    solved = robust_dp(model, UncertaintySpec("chi2", rho)).values.values
    assert np.max(np.abs(solved - V)) <= 1e-9
    assert np.max(np.abs(V - classical)) > 1e-6


# --- 4 ----------------------------------------------------------------------------


def check_full_simplex_tv():
    rng = np.random.default_rng(4)
    bad = 0
    for _ in range(100):
        p, v = _instance(rng, int(rng.integers(1, 9)))
        sol = inner_tv(p, v, float(rng.uniform(1.0, 5.0)))
        bad += not (sol.value == v.min() and sol.evaluations == 0)
    return record("4", bad == 0, f"TV rho>=1 equals min v bitwise, {100 - bad}/100")


def test_criterion_4_full_simplex_tv():
    assert check_full_simplex_tv()


# --- 5 ----------------------------------------------------------------------------


def check_lipschitz():
    rng = np.random.default_rng(5)
    worst = {}
    for kind, solve in SOLVERS.items():
        excess = -np.inf
        for _ in range(1000):
            S = int(rng.integers(1, 9))
            p, v1 = _instance(rng, S)
            v2 = np.clip(v1 + rng.normal(0, 5, size=S), 0, 50)
            rho = float(rng.uniform(0.01, 1.5))
            diff = abs(solve(p, v1, rho) - solve(p, v2, rho))
            excess = max(excess, diff - np.max(np.abs(v1 - v2)))
        worst[kind] = excess
    ok = all(e <= 1e-9 for e in worst.values())
    detail = ", ".join(f"{k} {e:.1e}" for k, e in worst.items())
    return record("5", ok, f"nonexpansive, max excess {detail}")


def test_criterion_5_lipschitz():
    assert check_lipschitz()


# --- 6 ----------------------------------------------------------------------------


def check_monotone_sandwich():
    rng = np.random.default_rng(6)
    grid = [0.01, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0, 1.5, 3.0]
    mono = {k: 0 for k in SOLVERS}
    sand = {k: 0 for k in SOLVERS}
    for kind, solve in SOLVERS.items():
        for _ in range(100):
            p, v = _instance(rng, int(rng.integers(1, 9)))
            vals = np.array([solve(p, v, rho) for rho in grid])
            mono[kind] += bool(np.any(np.diff(vals) > 1e-8))
            sand[kind] += bool(np.any(vals < v.min() - 1e-8) or np.any(vals > p @ v + 1e-8))
    ok = not any(mono.values()) and not any(sand.values())
    return record("6", ok, f"violations monotone {mono}, sandwich {sand}")


def test_criterion_6_monotone_sandwich():
    assert check_monotone_sandwich()


# --- 7 ----------------------------------------------------------------------------


def check_sample_trend():
    ns = (100, 300, 1000, 3000)
    cfg = ExperimentConfig("sweep-n", divergences=("tv", "chi2"), rhos=(0.2,), ns=ns)
    res = run_sweep_n(cfg)
    ok = True
    parts = []
    for kind in ("tv", "chi2"):
        gaps = [res.mean_gap(kind, N=n) for n in ns]
        ok &= all(b <= a for a, b in zip(gaps, gaps[1:])) and gaps[-1] <= 0.5 * gaps[0]
        parts.append(f"{kind} " + "/".join(f"{g:.4f}" for g in gaps))
    return record("7", ok, "seed-averaged gap over N=100/300/1000/3000: " + "; ".join(parts))


@pytest.mark.slow
def test_criterion_7_sample_trend():
    assert check_sample_trend()


# --- 8 ----------------------------------------------------------------------------


def check_radius_trend():
    cfg = ExperimentConfig("sweep-rho", divergences=("tv",), rhos=(0.1, 0.2, 0.4), ns=(100,))
    res = run_sweep_rho(cfg)
    gaps = [res.mean_gap("tv", rho=r) for r in (0.1, 0.2, 0.4)]
    return record("8", gaps[2] <= gaps[0], "TV seed-averaged gap at rho=0.1/0.2/0.4: " + "/".join(f"{g:.4f}" for g in gaps))


@pytest.mark.slow
def test_criterion_8_radius_trend():
    assert check_radius_trend()


# --- 9 ----------------------------------------------------------------------------


def check_test_environment():
    cfg = ExperimentConfig(
        "sweep-test-p",
        divergences=("tv", "chi2", "kl", "wasserstein"),
        rhos=(0.2,),
        test_ps=(0.45, 0.6),
        train_p=0.6,
    )
    res = run_sweep_test_p(cfg)
    win = {(r.divergence, r.test_p): r.win_prob_avg for r in res.rows}
    adversarial = win[("tv", 0.45)] >= win[("nominal", 0.45)] - 1e-9
    robust = [k for k in ("tv", "chi2", "kl", "wasserstein")]
    nominal_best = all(win[("nominal", 0.6)] >= win[(k, 0.6)] - 1e-9 for k in robust)
    detail = (
        f"p=0.45 TV {win[('tv', 0.45)]:.4f} vs nominal {win[('nominal', 0.45)]:.4f}; "
        f"p=0.6 nominal {win[('nominal', 0.6)]:.4f} vs robust max {max(win[(k, 0.6)] for k in robust):.4f}"
    )
    return record("9", adversarial and nominal_best, detail)


def test_criterion_9_test_environment():
    assert check_test_environment()


# --- 10 ---------------------------------------------------------------------------


def check_kl_stability():
    rng = np.random.default_rng(10)
    lam = np.logspace(-12, 4, 60)
    bad = 0
    with np.errstate(all="raise"):
        for _ in range(1000):
            p, v = _instance(rng, int(rng.integers(1, 9)))
            if rng.random() < 0.3:
                p[rng.integers(p.size)] = 0.0
                p = p / p.sum() if p.sum() > 0 else np.full(p.size, 1 / p.size)
            rho = float(rng.uniform(0.01, 2.0))
            try:
                obj = kl_dual_objective(p, v, rho, lam)
                val = inner_kl(p, v, rho).value
            except FloatingPointError:
                bad += 1
                continue
            bad += not (np.all(np.isfinite(obj)) and np.isfinite(val))
    return record("10", bad == 0, f"KL objective finite at lambda down to 1e-12, {1000 - bad}/1000 instances")


def test_criterion_10_kl_stability():
    assert check_kl_stability()


# --- 11 ---------------------------------------------------------------------------


def check_determinism(tmp_dir):
    args = ["sweep-n", "--divergence", "tv", "--divergence", "kl", "--n", "100,300", "--seed", "0,1"]
    outs = []
    for name in ("first.csv", "second.csv"):
        path = os.path.join(tmp_dir, name)
        subprocess.run([sys.executable, "-m", "rpvl.cli", *args, "--out", path], check=True)
        with open(path, "rb") as fh:
            outs.append(fh.read())
    ok = outs[0] == outs[1] and outs[0].count(b"\n") == 9
    return record("11", ok, f"two sweep-n runs byte-identical ({len(outs[0])} bytes)")


def test_criterion_11_determinism(tmp_path):
    assert check_determinism(str(tmp_path))


if __name__ == "__main__":
    import tempfile

    check_tv_duality()
    check_grid_duality()
    for kind in SOLVERS:
        check_small_radius(kind)
    check_full_simplex_tv()
    check_lipschitz()
    check_monotone_sandwich()
    check_sample_trend()
    check_radius_trend()
    check_test_environment()
    check_kl_stability()
    with tempfile.TemporaryDirectory() as tmp:
        check_determinism(tmp)
