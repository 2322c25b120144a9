"""Generative-model access and the phased maximum-likelihood estimate.

Every ``(h, s, a)`` triple owns its own Philox counter range under a key
derived from the seed; draw ``i`` of a triple is the ``i``-th uniform of that
range.  Results therefore do not depend on the order (or parallel schedule)
in which triples are sampled, and phases never share samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rpvl.core import TabularModel

_U53 = 1.0 / 9007199254740992.0  # 2**-53


@dataclass(frozen=True)
class GenerativeModel:
    """Sampler for the hidden nominal model ``truth``."""

    truth: TabularModel
    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SampleBudget:
    n_per_triple: int

    def __post_init__(self):
        if int(self.n_per_triple) != self.n_per_triple or self.n_per_triple < 1:
            raise ValueError("sample budget N must be a positive integer")

    def total(self, model: TabularModel) -> int:
        """Total generative-model calls: N for every (h, s, a)."""
        return self.n_per_triple * model.num_rows * model.horizon


@dataclass(frozen=True, eq=False)
class EmpiricalModel:
    """Phase-wise empirical kernels ``counts / N`` on the truth's structure."""

    model: TabularModel
    counts: np.ndarray
    n: int


def _seed_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)


def _stream(seed: int, h: int, s: int, a: int, key=None) -> np.random.Philox:
    # counter words (block, a, s, h): block advances with draws and cannot
    # reach the other words, so triples never overlap
    key = _seed_key(seed) if key is None else key
    return np.random.Philox(counter=[0, int(a), int(s), int(h)], key=key)


def uniforms(seed: int, h: int, s: int, a: int, n: int) -> np.ndarray:
    """First ``n`` uniforms in ``[0, 1)`` of the stream keyed by ``(seed, h, s, a)``."""
    return _raw_to_unit(_stream(seed, h, s, a).random_raw(n))


def _raw_to_unit(raw: np.ndarray) -> np.ndarray:
    return (raw >> np.uint64(11)).astype(np.float64) * _U53


def _inverse_cdf(row: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(row)
    cdf[-1] = 1.0
    # trailing zero-probability states must never be selected
    last = int(np.flatnonzero(row > 0)[-1])
    return np.minimum(np.searchsorted(cdf, u, side="right"), last)


def _check_triple(model: TabularModel, h, s, a):
    if not 0 <= h < model.horizon:
        raise ValueError(f"phase {h} out of range [0, {model.horizon})")
    if not 0 <= s < model.num_states:
        raise ValueError(f"state {s} out of range [0, {model.num_states})")
    return model.row(s, a)


def sample_next_state(gm: GenerativeModel, h: int, s: int, a: int, stream_index: int) -> int:
    """Draw number ``stream_index`` from ``P_h(. | s, a)`` by inverse CDF."""
    r = _check_triple(gm.truth, h, s, a)
    if stream_index < 0:
        raise ValueError("stream_index must be nonnegative")
    u = uniforms(gm.seed, h, s, a, stream_index + 1)[-1:]
    return int(_inverse_cdf(gm.truth.kernels[h, r], u)[0])


def empirical_row(counts: np.ndarray, n: int) -> np.ndarray:
    """``counts / n`` with the last nonzero entry absorbing rounding."""
    row = counts / n
    nz = np.flatnonzero(counts)
    last = nz[-1]
    row[last] = 1.0 - (row[:last].sum() + row[last + 1 :].sum())
    return row


def sample_counts(gm: GenerativeModel, h: int, s: int, a: int, n: int) -> np.ndarray:
    """Next-state counts of the first ``n`` draws of triple ``(h, s, a)``."""
    r = _check_triple(gm.truth, h, s, a)
    row = gm.truth.kernels[h, r]
    S = gm.truth.num_states
    support = np.flatnonzero(row > 0)
    if support.size == 1:
        # every uniform maps to the single support state
        counts = np.zeros(S, dtype=np.int64)
        counts[support[0]] = n
        return counts
    draws = _inverse_cdf(row, uniforms(gm.seed, h, s, a, n))
    return np.bincount(draws, minlength=S)


def mle_estimate(gm: GenerativeModel, budget: SampleBudget) -> EmpiricalModel:
    """Phased maximum-likelihood estimate of the nominal kernels.

    Draws match :func:`sample_counts` triple by triple; the loop only hoists
    the key derivation and per-row CDFs out of the inner loop.
    """
    truth = gm.truth
    n = int(budget.n_per_triple)
    S = truth.num_states
    key = _seed_key(gm.seed)
    counts = np.zeros_like(truth.kernels, dtype=np.int64)
    kernels = np.zeros_like(truth.kernels)
    for h in range(truth.horizon):
        block = truth.kernels[h]
        cdfs = np.cumsum(block, axis=1)
        cdfs[:, -1] = 1.0
        positive = block > 0
        n_support = positive.sum(axis=1)
        last = S - 1 - np.argmax(positive[:, ::-1], axis=1)
        for r in range(truth.num_rows):
            if n_support[r] == 1:
                counts[h, r, last[r]] = n
                kernels[h, r, last[r]] = 1.0
                continue
            raw = _stream(gm.seed, h, truth.row_state[r], truth.row_action[r], key).random_raw(n)
            draws = np.minimum(np.searchsorted(cdfs[r], _raw_to_unit(raw), side="right"), last[r])
            c = np.bincount(draws, minlength=S)
            counts[h, r] = c
            kernels[h, r] = empirical_row(c, n)
    counts.setflags(write=False)
    return EmpiricalModel(model=truth.with_kernels(kernels), counts=counts, n=n)
