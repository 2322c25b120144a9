"""Data model for finite-horizon tabular (robust) MDPs.

A :class:`TabularModel` stores its state-action pairs as flat *rows*: the
actions of state ``s`` occupy rows ``offsets[s]:offsets[s + 1]``, in the order
given by ``actions[s]``.  Rewards have shape ``(H, n_rows)`` and kernels
``(H, n_rows, S)``.  Phases are 0-based in code: phase ``h`` of an
``H``-phase model is ``h = 0 .. H-1`` and value row ``H`` is the terminal zero.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12


class DivergenceKind(str, enum.Enum):
    TV = "tv"
    CHI2 = "chi2"
    KL = "kl"
    WASSERSTEIN = "wasserstein"

    @classmethod
    def parse(cls, name: str) -> "DivergenceKind":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown divergence {name!r}") from None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DistanceMetric:
    """Ground metric on the state space, as a dense symmetric matrix."""

    matrix: np.ndarray
    positions: Optional[np.ndarray] = None

    def __post_init__(self):
        d = np.array(self.matrix, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("metric must be a square matrix")
        if np.any(d < 0) or np.any(np.diag(d) != 0):
            raise ValueError("metric must be nonnegative with zero diagonal")
        if not np.array_equal(d, d.T):
            raise ValueError("metric must be symmetric")
        if d.shape[0] > 1 and d.max() <= 0:
            raise ValueError("metric must separate at least two states")
        object.__setattr__(self, "matrix", _frozen(d))
        if self.positions is not None:
            pos = _frozen(np.array(self.positions, dtype=np.float64))
            object.__setattr__(self, "positions", pos)

    @classmethod
    def from_positions(cls, positions: Sequence[float]) -> "DistanceMetric":
        pos = np.asarray(positions, dtype=np.float64)
        return cls(np.abs(pos[:, None] - pos[None, :]), positions=pos)

    @classmethod
    def line(cls, num_states: int) -> "DistanceMetric":
        """``d(s, s') = |s - s'|`` on integer-labelled states."""
        return cls.from_positions(np.arange(num_states, dtype=np.float64))

    @property
    def num_states(self) -> int:
        return self.matrix.shape[0]

    def cost(self, p: int = 1) -> np.ndarray:
        """Matrix of ``d(s, s') ** p``."""
        return self.matrix**p

    def bound(self, p: int = 1) -> float:
        """``B_p``, the largest ``d(s, s') ** p``."""
        return float(self.cost(p).max())


@dataclass(frozen=True)
class UncertaintySpec:
    kind: DivergenceKind
    rho: float
    p: int = 1
    metric: Optional[DistanceMetric] = field(default=None, compare=False)

    def __post_init__(self):
        kind = DivergenceKind.parse(self.kind) if isinstance(self.kind, str) else self.kind
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "rho", float(self.rho))
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ValueError(f"radius must be a nonnegative finite number, got {self.rho}")
        if kind is DivergenceKind.WASSERSTEIN and self.rho <= 0:
            raise ValueError("Wasserstein radius must be positive")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"Wasserstein order must be an integer >= 1, got {self.p}")
        object.__setattr__(self, "p", int(self.p))

    def metric_for(self, num_states: int) -> DistanceMetric:
        if self.metric is None:
            return DistanceMetric.line(num_states)
        if self.metric.num_states != num_states:
            raise ValueError(
                f"metric is over {self.metric.num_states} states, model has {num_states}"
            )
        return self.metric


@dataclass(frozen=True)
class DualSolution:
    """Result of one inner worst-case expectation.

    ``dual_var`` is the threshold for TV / chi-square and the multiplier for
    KL / Wasserstein; ``evaluations`` counts dual-objective calls.
    """

    dual_var: float
    value: float
    evaluations: int


@dataclass(frozen=True)
class ModelViolation:
    kind: str
    h: int
    s: int
    a: int
    message: str


class TabularModel:
    """Finite-horizon MDP with ragged per-state action sets."""

    def __init__(self, num_states, actions, reward, kernels):
        self.num_states = int(num_states)
        self.actions = tuple(tuple(int(a) for a in acts) for acts in actions)
        if len(self.actions) != self.num_states:
            raise ValueError("need one action list per state")
        counts = np.array([len(a) for a in self.actions], dtype=np.int64)
        self.offsets = _frozen(np.concatenate([[0], np.cumsum(counts)]))
        self.num_rows = int(self.offsets[-1])
        self.row_state = _frozen(np.repeat(np.arange(self.num_states), counts))
        self.row_action = _frozen(
            np.array([a for acts in self.actions for a in acts], dtype=np.int64)
        )
        self.reward = _frozen(np.array(reward, dtype=np.float64))
        self.kernels = _frozen(np.array(kernels, dtype=np.float64))
        if self.reward.ndim != 2 or self.reward.shape[1] != self.num_rows:
            raise ValueError(f"reward must have shape (H, {self.num_rows})")
        self.horizon = self.reward.shape[0]
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.kernels.shape != (self.horizon, self.num_rows, self.num_states):
            raise ValueError(
                f"kernels must have shape {(self.horizon, self.num_rows, self.num_states)}"
            )
        self._lookup = [{a: i for i, a in enumerate(acts)} for acts in self.actions]

    @classmethod
    def from_nested(cls, num_states, horizon, actions, reward, kernels):
        """Build from ``reward[h][s][a]`` and ``kernels[h][s][a][s']`` nesting."""
        if len(reward) != horizon or len(kernels) != horizon:
            raise ValueError("reward and kernels must have one entry per phase")
        flat_r = [[x for per_s in reward[h] for x in per_s] for h in range(horizon)]
        flat_k = [[row for per_s in kernels[h] for row in per_s] for h in range(horizon)]
        return cls(num_states, actions, flat_r, flat_k)

    def rows_of(self, s: int) -> slice:
        return slice(int(self.offsets[s]), int(self.offsets[s + 1]))

    def row(self, s: int, action: int) -> int:
        """Flat row index of action id ``action`` at state ``s``."""
        try:
            return int(self.offsets[s]) + self._lookup[s][action]
        except (KeyError, IndexError):
            raise ValueError(f"action {action} is not available at state {s}") from None

    def kernel(self, h: int, s: int, action: int) -> np.ndarray:
        return self.kernels[h, self.row(s, action)]

    def with_kernels(self, kernels) -> "TabularModel":
        """Same states, actions and rewards with replaced transition kernels."""
        return TabularModel(self.num_states, self.actions, self.reward, kernels)

    def nested_reward(self):
        return [
            [self.reward[h, self.rows_of(s)].tolist() for s in range(self.num_states)]
            for h in range(self.horizon)
        ]

    def nested_kernels(self):
        return [
            [self.kernels[h, self.rows_of(s)].tolist() for s in range(self.num_states)]
            for h in range(self.horizon)
        ]

    def __repr__(self):
        return (
            f"TabularModel(num_states={self.num_states}, rows={self.num_rows}, "
            f"horizon={self.horizon})"
        )


def validate_model(model: TabularModel) -> Optional[ModelViolation]:
    """Return the first violated model invariant, or ``None`` if valid."""
    for s, acts in enumerate(model.actions):
        if not acts:
            return ModelViolation("action_index", -1, s, -1, f"state {s} has no actions")
        if len(set(acts)) != len(acts) or min(acts) < 0:
            return ModelViolation(
                "action_index", -1, s, -1, f"state {s} has duplicate or negative action ids"
            )
    H = model.horizon
    for h in range(H):
        for r in range(model.num_rows):
            s = int(model.row_state[r])
            a = int(model.row_action[r])
            row = model.kernels[h, r]
            if not np.all(np.isfinite(row)) or np.any(row < 0):
                return ModelViolation(
                    "negative_prob", h, s, a, f"kernel row at (h={h}, s={s}, a={a}) is not nonnegative"
                )
            total = float(row.sum())
            if abs(total - 1.0) > ROW_SUM_TOL:
                return ModelViolation(
                    "row_sum", h, s, a, f"kernel row at (h={h}, s={s}, a={a}) sums to {total!r}"
                )
            rew = float(model.reward[h, r])
            if not 0.0 <= rew <= 1.0:
                return ModelViolation(
                    "reward_range", h, s, a, f"reward at (h={h}, s={s}, a={a}) is {rew!r}"
                )
    return None


def check_model(model: TabularModel) -> TabularModel:
    violation = validate_model(model)
    if violation is not None:
        raise ValueError(violation.message)
    return model


def expectation(p, v) -> float:
    p = np.asarray(p, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if p.shape != v.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {v.shape}")
    return float(p @ v)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Per-phase values, ``H + 1`` rows with the last row identically zero."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("values must be a 2-d array")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    def first(self) -> np.ndarray:
        return self.values[0]


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic Markov policy: ``decisions[h, s]`` is an action id."""

    decisions: np.ndarray

    def __post_init__(self):
        d = np.array(self.decisions, dtype=np.int64)
        if d.ndim != 2:
            raise ValueError("decisions must be a 2-d array")
        object.__setattr__(self, "decisions", _frozen(d))

    def rows(self, model: TabularModel) -> np.ndarray:
        """Flat row index of each decision, shape ``(H, S)``."""
        H, S = self.decisions.shape
        if H != model.horizon or S != model.num_states:
            raise ValueError(
                f"policy shape {(H, S)} does not match model {(model.horizon, model.num_states)}"
            )
        out = np.empty((H, S), dtype=np.int64)
        for h in range(H):
            for s in range(S):
                out[h, s] = model.row(s, int(self.decisions[h, s]))
        return out

    def __eq__(self, other):
        return isinstance(other, Policy) and np.array_equal(self.decisions, other.decisions)

    __hash__ = None


InnerFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def greedy_value_backup(model: TabularModel, h: int, v_next, inner: InnerFn):
    """One robust Bellman step at phase ``h``.

    ``inner(P, v)`` maps the ``(n_rows, S)`` kernel block of the phase and the
    continuation values to one inner value per row.  Returns the per-state
    maximum and the maximizing action id, taking the first listed action on
    exact ties.
    """
    v_next = np.asarray(v_next, dtype=np.float64)
    if v_next.shape != (model.num_states,):
        raise ValueError(f"continuation values must have shape ({model.num_states},)")
    q = model.reward[h] + np.asarray(inner(model.kernels[h], v_next), dtype=np.float64)
    return _argmax_by_state(model, q)


def _argmax_by_state(model: TabularModel, q: np.ndarray):
    starts = model.offsets[:-1]
    best = np.maximum.reduceat(q, starts)
    hit = q == best[model.row_state]
    idx = np.where(hit, np.arange(model.num_rows), model.num_rows)
    first = np.minimum.reduceat(idx, starts)
    return best, model.row_action[first].copy()
