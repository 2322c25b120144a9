"""Sweep harness: sample-size, radius and test-environment studies as CSV rows.

Each sweep is a pure function of its :class:`ExperimentConfig`.  Rows are
sorted before they are written, so the CSV bytes do not depend on the order
in which grid points were computed.  Wall-clock time is only recorded when
``timing`` is switched on; otherwise the column holds 0 and repeated runs are
byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from rpvl.core import DistanceMetric, DivergenceKind, TabularModel, UncertaintySpec
from rpvl.duals import SolverConfig
from rpvl.gamblers import GamblersConfig, build_gamblers, gamblers_metric, interior_average, perturb
from rpvl.planner import evaluate_robust, evaluate_under, robust_dp, rpvl, suboptimality_gap
from rpvl.sampling import GenerativeModel, SampleBudget

COMMANDS = ("solve", "sample-solve", "evaluate", "sweep-n", "sweep-rho", "sweep-test-p")
CSV_HEADER = ("divergence", "rho", "N", "seed", "test_p", "gap", "gap_normalized", "win_prob_avg", "wall_ms")
NOMINAL_LABEL = "nominal"
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep depends on.

    ``model=None`` selects the built-in Gambler's Problem with ``gamblers``
    settings, whose heads probability is overridden by ``train_p``.
    """

    command: str
    divergences: tuple = ()
    rhos: tuple = (0.2,)
    ns: tuple = (100,)
    test_ps: tuple = ()
    seeds: tuple = DEFAULT_SEEDS
    train_p: float = 0.6
    wasserstein_p: int = 1
    tol: float = 1e-9
    model: Optional[TabularModel] = field(default=None, compare=False)
    gamblers: GamblersConfig = GamblersConfig()
    timing: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        kinds = tuple(DivergenceKind.parse(d) if isinstance(d, str) else d for d in self.divergences)
        object.__setattr__(self, "divergences", kinds)
        for name in ("divergences", "rhos", "ns", "seeds"):
            values = tuple(getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise ValueError(f"{name} must not be empty")
        object.__setattr__(self, "test_ps", tuple(float(p) for p in self.test_ps))
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if len(set(kinds)) != len(kinds):
            raise ValueError("divergences must be distinct")
        if any(int(n) != n or n < 1 for n in self.ns):
            raise ValueError("sample sizes must be positive integers")
        if any(int(s) != s or s < 0 for s in self.seeds):
            raise ValueError("seeds must be nonnegative integers")
        for rho in self.rhos:
            for kind in kinds:
                # constructing the spec validates the radius for this divergence
                UncertaintySpec(kind, rho, self.wasserstein_p)
        if not 0.0 <= self.train_p <= 1.0:
            raise ValueError("train_p must lie in [0, 1]")
        if any(not 0.0 <= p <= 1.0 for p in self.test_ps):
            raise ValueError("test probabilities must lie in [0, 1]")
        if self.command == "sweep-test-p":
            if self.model is not None:
                raise ValueError("sweep-test-p needs the built-in gamblers environment")
            if not self.test_ps:
                raise ValueError("test_ps must not be empty")
        if self.command == "sweep-rho" and len(self.ns) != 1:
            raise ValueError("sweep-rho takes a single sample size")

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(tol=self.tol)

    @property
    def gamblers_cfg(self) -> GamblersConfig:
        return replace(self.gamblers, heads_prob=float(self.train_p))

    def truth(self) -> TabularModel:
        return self.model if self.model is not None else build_gamblers(self.gamblers_cfg)

    def metric(self) -> Optional[DistanceMetric]:
        return gamblers_metric(self.gamblers_cfg) if self.model is None else None

    def spec(self, kind: DivergenceKind, rho: float) -> UncertaintySpec:
        metric = self.metric() if kind is DivergenceKind.WASSERSTEIN else None
        return UncertaintySpec(kind, rho, self.wasserstein_p, metric)

    def win_average(self, values) -> float:
        """Interior average for the gamblers game, plain state average otherwise."""
        if self.model is None:
            return interior_average(values, self.gamblers.goal)
        return float(np.mean(values))


@dataclass(frozen=True)
class SweepRow:
    divergence: str
    rho: float
    N: int
    seed: int
    test_p: Optional[float]
    gap: float
    win_prob_avg: float
    win_prob_by_state: tuple
    wall_ms: float = 0.0
    gap_normalized: float = 0.0

    def sort_key(self):
        test_p = -math.inf if self.test_p is None else self.test_p
        return (self.divergence, self.rho, self.N, self.seed, test_p)


@dataclass(frozen=True)
class SweepResult:
    rows: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=SweepRow.sort_key)))

    def mean_gap(self, divergence: str, **match) -> float:
        gaps = [
            r.gap
            for r in self.rows
            if r.divergence == divergence and all(getattr(r, k) == v for k, v in match.items())
        ]
        if not gaps:
            raise KeyError(f"no rows for {divergence} with {match}")
        return float(np.mean(gaps))


def _normalized(rows: Sequence[SweepRow]) -> SweepResult:
    peak = {}
    for r in rows:
        peak[r.divergence] = max(peak.get(r.divergence, 0.0), r.gap)
    out = [replace(r, gap_normalized=r.gap / peak[r.divergence] if peak[r.divergence] > 0 else 0.0) for r in rows]
    return SweepResult(tuple(out))


def _elapsed_ms(cfg, t0) -> float:
    return (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0


def _learning_rows(cfg: ExperimentConfig, pairs) -> list:
    """One rpvl run per (divergence, rho, N, seed) scored against the exact solution."""
    truth = cfg.truth()
    test_p = cfg.train_p if cfg.model is None else None
    rows = []
    exact = {}
    for kind, rho, n in pairs:
        spec = cfg.spec(kind, rho)
        if (kind, rho) not in exact:
            exact[(kind, rho)] = robust_dp(truth, spec, cfg.solver).values
        vstar = exact[(kind, rho)]
        for seed in cfg.seeds:
            t0 = time.perf_counter()
            plan = rpvl(GenerativeModel(truth, int(seed)), SampleBudget(int(n)), spec, cfg.solver)
            vpi = evaluate_robust(plan.policy, truth, spec, cfg.solver)
            wall = _elapsed_ms(cfg, t0)
            win = evaluate_under(plan.policy, truth).first()
            rows.append(
                SweepRow(
                    divergence=kind.value,
                    rho=float(rho),
                    N=int(n),
                    seed=int(seed),
                    test_p=test_p,
                    gap=suboptimality_gap(vstar, vpi),
                    win_prob_avg=cfg.win_average(win),
                    win_prob_by_state=tuple(win.tolist()),
                    wall_ms=wall,
                )
            )
    return rows


def run_sweep_n(cfg: ExperimentConfig) -> SweepResult:
    """Gap of the learned policy across sample sizes, for every radius given."""
    pairs = [(k, rho, n) for k in cfg.divergences for rho in cfg.rhos for n in cfg.ns]
    return _normalized(_learning_rows(cfg, pairs))


def run_sweep_rho(cfg: ExperimentConfig) -> SweepResult:
    """Gap of the learned policy across radii at the single sample size."""
    (n,) = cfg.ns
    pairs = [(k, rho, n) for k in cfg.divergences for rho in cfg.rhos]
    return _normalized(_learning_rows(cfg, pairs))


def run_sweep_test_p(cfg: ExperimentConfig) -> SweepResult:
    """Exact-model policies trained at ``train_p`` and played at each test probability.

    The non-robust policy appears with divergence ``nominal`` and radius 0.
    Rows use ``N = 0`` and ``seed = 0`` since no sampling is involved; ``gap``
    is the shortfall against the policy that is optimal for the test game.
    """
    truth = cfg.truth()
    trained = []
    t0 = time.perf_counter()
    trained.append((NOMINAL_LABEL, 0.0, robust_dp(truth, None, cfg.solver).policy, _elapsed_ms(cfg, t0)))
    for kind in cfg.divergences:
        for rho in cfg.rhos:
            t0 = time.perf_counter()
            policy = robust_dp(truth, cfg.spec(kind, rho), cfg.solver).policy
            trained.append((kind.value, float(rho), policy, _elapsed_ms(cfg, t0)))
    rows = []
    for test_p in cfg.test_ps:
        test_model = perturb(cfg.gamblers_cfg, test_p)
        best = robust_dp(test_model, None, cfg.solver).values
        for label, rho, policy, wall in trained:
            values = evaluate_under(policy, test_model)
            win = values.first()
            rows.append(
                SweepRow(
                    divergence=label,
                    rho=rho,
                    N=0,
                    seed=0,
                    test_p=float(test_p),
                    gap=suboptimality_gap(best, values),
                    win_prob_avg=cfg.win_average(win),
                    win_prob_by_state=tuple(win.tolist()),
                    wall_ms=wall,
                )
            )
    return _normalized(rows)


SWEEPS = {"sweep-n": run_sweep_n, "sweep-rho": run_sweep_rho, "sweep-test-p": run_sweep_test_p}


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    try:
        return SWEEPS[cfg.command](cfg)
    except KeyError:
        raise ValueError(f"{cfg.command!r} is not a sweep command") from None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    # adding 0.0 folds -0.0 into 0.0
    return format(float(x) + 0.0, ".12g")


def csv_text(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in result.rows:
        writer.writerow(
            [
                r.divergence,
                _fmt(r.rho),
                _fmt(r.N),
                _fmt(r.seed),
                _fmt(r.test_p),
                _fmt(r.gap),
                _fmt(r.gap_normalized),
                _fmt(r.win_prob_avg),
                _fmt(r.wall_ms),
            ]
        )
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def states_path(path) -> Path:
    """Sidecar file holding each row's per-state first-phase values."""
    path = Path(path)
    return path.with_name(path.name + ".states.json")


def emit_csv(result: SweepResult, path, sidecar: bool = True) -> None:
    """Write the CSV and, next to it, the per-state values of every row."""
    path = Path(path)
    _write(path, csv_text(result))
    if sidecar:
        records = [
            {
                "divergence": r.divergence,
                "rho": r.rho,
                "N": r.N,
                "seed": r.seed,
                "test_p": r.test_p,
                "win_prob_by_state": list(r.win_prob_by_state),
            }
            for r in result.rows
        ]
        _write(states_path(path), json.dumps(records) + "\n")
