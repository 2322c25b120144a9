"""The Gambler's Problem as a finite-horizon tabular MDP.

States ``0 .. goal`` are the gambler's balance and state ``goal + 1`` is an
absorbing sink.  At an interior balance ``s`` the stake ``a`` ranges over
``0 .. min(s, goal - s)``; heads (probability ``heads_prob``) moves to
``s + a`` and tails to ``s - a``.  Balances ``0`` and ``goal`` end the game by
moving to the sink, and being at ``goal`` pays 1 exactly once, so the
first-phase value is the probability of reaching the goal in time.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from rpvl.core import DistanceMetric, TabularModel


@dataclass(frozen=True)
class GamblersConfig:
    goal: int = 50
    horizon: int = 50
    heads_prob: float = 0.6

    def __post_init__(self):
        if self.goal < 1:
            raise ValueError("goal must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 0.0 <= self.heads_prob <= 1.0:
            raise ValueError(f"heads probability must lie in [0, 1], got {self.heads_prob}")

    @property
    def sink(self) -> int:
        return self.goal + 1

    @property
    def num_states(self) -> int:
        return self.goal + 2


def gamblers_actions(goal: int):
    acts = [tuple(range(min(s, goal - s) + 1)) for s in range(goal + 1)]
    acts.append((0,))
    return acts


def build_gamblers(cfg: GamblersConfig = GamblersConfig()) -> TabularModel:
    S = cfg.num_states
    acts = gamblers_actions(cfg.goal)
    rows = []
    rewards = []
    for s, stakes in enumerate(acts):
        for a in stakes:
            row = np.zeros(S)
            if s in (0, cfg.goal, cfg.sink):
                row[cfg.sink] = 1.0
            elif a == 0:
                row[s] = 1.0
            else:
                row[s + a] += cfg.heads_prob
                row[s - a] += 1.0 - cfg.heads_prob
            rows.append(row)
            rewards.append(1.0 if s == cfg.goal else 0.0)
    kernel = np.array(rows)
    H = cfg.horizon
    return TabularModel(
        S,
        acts,
        np.broadcast_to(np.array(rewards), (H, len(rewards))),
        np.broadcast_to(kernel, (H,) + kernel.shape),
    )


def perturb(cfg: GamblersConfig, new_p: float) -> TabularModel:
    """The same game with heads probability ``new_p``."""
    if not 0.0 <= new_p <= 1.0:
        raise ValueError(f"heads probability must lie in [0, 1], got {new_p}")
    return build_gamblers(dataclasses.replace(cfg, heads_prob=float(new_p)))


def gamblers_metric(cfg: GamblersConfig = GamblersConfig()) -> DistanceMetric:
    """``|s - s'|`` on balances, with the sink placed at position -1.

    The sink and balance 0 both have value 0, so an adversary never gains by
    moving mass to the sink rather than to balance 0, which is closer.
    """
    positions = np.concatenate([np.arange(cfg.goal + 1, dtype=np.float64), [-1.0]])
    return DistanceMetric.from_positions(positions)


def interior_average(values, goal: int) -> float:
    """Uniform average of a first-phase value row over balances ``1 .. goal-1``."""
    return float(np.mean(np.asarray(values)[1:goal]))
