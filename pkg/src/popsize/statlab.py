"""Monte Carlo samplers and one-sided bound checks.

Every sampler takes an :class:`~popsize.rng.Rng` and is deterministic given
its state. Empirical tails carry binomial standard errors, and
:func:`verify_bound` accepts a threshold when the empirical survival minus
``slack_sigma`` standard errors does not exceed the analytic bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numba import njit

from . import _state as st
from ._state import ROLE, ROLE_X
from .engine import draw_pair
from .estimation import ProtocolParams, partition_kernel
from .rng import Rng, geometric_half

DEFAULT_SLACK_SIGMA = 3.0


# ---------------------------------------------------------------- kernels


@njit(nogil=True, cache=True)
def _max_geom_kernel(state, N, out):
    for j in range(out.shape[0]):
        m = 0
        for _ in range(N):
            g = geometric_half(state)
            if g > m:
                m = g
        out[j] = m


@njit(nogil=True, cache=True)
def _sum_maxima_kernel(state, N, K, out):
    for j in range(out.shape[0]):
        total = 0
        for _ in range(K):
            m = 0
            for _ in range(N):
                g = geometric_half(state)
                if g > m:
                    m = g
            total += m
        out[j] = total


@njit(nogil=True, cache=True)
def _epidemic_kernel(state, n, m):
    """Interactions until a two-way max epidemic among agents 0..m-1 completes."""
    infected = np.zeros(n, dtype=np.bool_)
    infected[0] = True
    count = 1
    steps = 0
    while count < m:
        r, s = draw_pair(state, n)
        steps += 1
        if r < m and s < m and infected[r] != infected[s]:
            infected[r] = True
            infected[s] = True
            count += 1
    return steps


@njit(nogil=True, cache=True)
def _interaction_count_kernel(state, n, draws):
    counts = np.zeros(n, dtype=np.int64)
    for _ in range(draws):
        r, s = draw_pair(state, n)
        counts[r] += 1
        counts[s] += 1
    best = 0
    for i in range(n):
        if counts[i] > best:
            best = counts[i]
    return best


@njit(nogil=True, cache=True)
def _count_decay_kernel(state, n, k, draws):
    marked = np.zeros(n, dtype=np.bool_)
    marked[:k] = True
    count = k
    low = k
    for _ in range(draws):
        r, s = draw_pair(state, n)
        if marked[r]:
            marked[r] = False
            count -= 1
        if marked[s]:
            marked[s] = False
            count -= 1
        if count < low:
            low = count
    return low


@njit(nogil=True, cache=True)
def _partition_kernel_loop(agents, state, params):
    """Partition only, until no X agent is left; returns the interaction count."""
    n = agents.shape[0]
    undecided = n
    steps = 0
    while undecided > 0:
        r, s = draw_pair(state, n)
        steps += 1
        before = (agents[r, ROLE] == ROLE_X) + (agents[s, ROLE] == ROLE_X)
        partition_kernel(agents, r, s, params, state)
        undecided -= before - ((agents[r, ROLE] == ROLE_X) + (agents[s, ROLE] == ROLE_X))
    return steps


# ---------------------------------------------------------------- samplers


def _check_count(count: int) -> None:
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")


def sample_max_geometric(rng: Rng, N: int, count: int) -> np.ndarray:
    """``count`` draws of the maximum of N independent geometric(1/2) variables."""
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    _check_count(count)
    out = np.empty(count, dtype=np.int64)
    _max_geom_kernel(rng.state, N, out)
    return out


def sample_sum_of_maxima(rng: Rng, N: int, K: int, count: int) -> np.ndarray:
    """``count`` draws of S = M_1 + ... + M_K, each M_i a max of N geometrics."""
    if N < 1 or K < 1:
        raise ValueError(f"N and K must be positive, got N={N}, K={K}")
    _check_count(count)
    out = np.empty(count, dtype=np.int64)
    _sum_maxima_kernel(rng.state, N, K, out)
    return out


def measure_epidemic_time(n: int, subpop_fraction: float, rng: Rng) -> float:
    """Parallel time (interactions / n) for a max to reach a whole subpopulation.

    The subpopulation is the first ``floor(subpop_fraction * n)`` agents and
    only interactions between two of its members spread the value; all n
    agents are scheduled.
    """
    if not (0.0 < subpop_fraction <= 1.0):
        raise ValueError(f"subpop_fraction must lie in (0, 1], got {subpop_fraction}")
    m = int(math.floor(subpop_fraction * n))
    if m < 2:
        raise ValueError(f"subpopulation of {m} agents is too small")
    return _epidemic_kernel(rng.state, n, m) / n


def measure_interaction_counts(n: int, window_parallel_time: float, rng: Rng) -> int:
    """Largest number of interactions any agent takes part in during the window."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if window_parallel_time < 0:
        raise ValueError("window must be non-negative")
    draws = int(round(window_parallel_time * n))
    return int(_interaction_count_kernel(rng.state, n, draws))


def measure_count_decay(n: int, k: int, T: float, rng: Rng) -> int:
    """Minimum marked count over T*n interactions of worst-case consumption.

    Any marked agent touched by an interaction is unmarked, both if both are.
    """
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if T < 0:
        raise ValueError("T must be non-negative")
    return int(_count_decay_kernel(rng.state, n, k, int(round(T * n))))


def measure_partition(n: int, rng: Rng, variant: str = "as") -> int:
    """Number of A agents once the role partition has finished."""
    agents = st.initial_rows(n)
    _partition_kernel_loop(agents, rng.state, ProtocolParams(variant=variant).as_array())
    return int(np.count_nonzero(agents[:, st.ROLE] == st.ROLE_A))


# ---------------------------------------------------------------- tails and reports


@dataclass(frozen=True)
class EmpiricalTail:
    """Estimated survival Pr[X >= threshold] with binomial standard errors.

    ``confidence_halfwidths`` are 3 standard errors; ``sigma`` is one.
    """

    thresholds: np.ndarray
    survival: np.ndarray
    sample_count: int
    sigma: np.ndarray = field(repr=False)
    confidence_halfwidths: np.ndarray = field(repr=False)

    @classmethod
    def from_counts(cls, thresholds: Sequence[float], hits: Sequence[int], sample_count: int) -> "EmpiricalTail":
        if sample_count < 1:
            raise ValueError("sample_count must be positive")
        t = np.asarray(thresholds, dtype=np.float64)
        if t.size == 0:
            raise ValueError("thresholds must be non-empty")
        if np.any(np.diff(t) < 0):
            raise ValueError("thresholds must be sorted")
        p = np.asarray(hits, dtype=np.float64) / sample_count
        sigma = np.sqrt(p * (1.0 - p) / sample_count)
        return cls(t, p, int(sample_count), sigma, 3.0 * sigma)

    @classmethod
    def from_samples(cls, samples: np.ndarray, thresholds: Sequence[float],
                     center: Optional[float] = None) -> "EmpiricalTail":
        """Pr[X >= t], or Pr[|X - center| >= t] when ``center`` is given."""
        x = np.asarray(samples, dtype=np.float64)
        if center is not None:
            x = np.abs(x - center)
        x = np.sort(x)
        t = np.asarray(thresholds, dtype=np.float64)
        hits = x.size - np.searchsorted(x, t, side="left")
        return cls.from_counts(t, hits, x.size)

    @classmethod
    def lower(cls, samples: np.ndarray, thresholds: Sequence[float]) -> "EmpiricalTail":
        """Pr[X <= t], stored against -t so that survival stays non-increasing."""
        x = np.asarray(samples, dtype=np.float64)
        t = np.sort(np.asarray(thresholds, dtype=np.float64))[::-1]
        return cls.from_samples(-x, -t)


Analytic = Union[Callable[[float], float], Sequence[float], float]


@dataclass
class BoundReport:
    bound_name: str
    parameters: dict
    rows: list  # (threshold, empirical, empirical + slack, analytic, passed)
    slack_sigma: float

    @property
    def verdict(self) -> bool:
        return all(row[4] for row in self.rows)

    def lines(self) -> list[str]:
        head = f"{self.bound_name} {self.parameters} slack={self.slack_sigma}sigma"
        body = [f"  t={t:g} emp={e:.6g} emp+slack={es:.6g} bound={a:.6g} {'ok' if ok else 'FAIL'}"
                for t, e, es, a, ok in self.rows]
        return [head] + body + [f"  verdict: {'pass' if self.verdict else 'fail'}"]


def _analytic_values(analytic: Analytic, thresholds: np.ndarray) -> np.ndarray:
    if callable(analytic):
        return np.array([float(analytic(float(t))) for t in thresholds])
    values = np.broadcast_to(np.asarray(analytic, dtype=np.float64), thresholds.shape)
    return np.array(values)


def verify_bound(empirical: EmpiricalTail, analytic: Analytic,
                 slack_sigma: float = DEFAULT_SLACK_SIGMA, bound_name: str = "bound",
                 parameters: Optional[dict] = None) -> BoundReport:
    """Check survival - slack_sigma * sigma <= analytic at every threshold.

    Args:
        empirical: The measured tail.
        analytic: Callable of the threshold, a per-threshold sequence, or a constant.
        slack_sigma: Allowance in binomial standard errors.
        bound_name: Label for the report.
        parameters: Free-form record of the setting, echoed in the report.
    """
    if slack_sigma < 0:
        raise ValueError("slack_sigma must be non-negative")
    values = _analytic_values(analytic, empirical.thresholds)
    rows = []
    for t, p, s, a in zip(empirical.thresholds, empirical.survival, empirical.sigma, values):
        slack = slack_sigma * s
        rows.append((float(t), float(p), float(p + slack), float(a), bool(p - slack <= a)))
    return BoundReport(bound_name, dict(parameters or {}), rows, slack_sigma)
