"""Closed-form probability bounds used as oracles for the Monte Carlo checks.

Every function returns the raw formula value as a :class:`BoundValue`, a
``float`` that also reports whether it is vacuous (at least 1) as a
probability bound. Clamping to 1 is left to callers, via :func:`clamp`.

Conventions: a geometric variable counts flips up to and including the first
head, so a 1/2-geometric has mean 2; ``log`` means log base 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class BoundValue(float):
    """A bound as a plain float, plus a ``vacuous`` flag."""

    @property
    def vacuous(self) -> bool:
        return self >= 1.0


_TINY = math.ulp(0.0)


def _bv(x: float) -> BoundValue:
    # an underflowed bound is rounded up, which keeps it a valid upper bound
    return BoundValue(x if x > 0.0 else _TINY)


_LOG_MAX = math.log(np.finfo(float).max)


def _bv_log(log_value: float) -> BoundValue:
    # vacuous bounds past the double range saturate at the largest double
    if log_value >= _LOG_MAX:
        return BoundValue(np.finfo(float).max)
    return _bv(math.exp(log_value))


def clamp(value: float) -> float:
    """Probability bound capped at 1."""
    return min(1.0, float(value))


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class SubExpParams:
    """Pr[|X - EX| >= lam] <= alpha * exp(-lam / beta)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise DomainError(f"alpha and beta must be positive, got {self.alpha}, {self.beta}")

    def tail(self, lam: float) -> BoundValue:
        return _bv(self.alpha * math.exp(-lam / self.beta))


@dataclass(frozen=True)
class MaxGeomConstants:
    gamma: float = 0.5772156649
    eps1: float = 0.01
    eps2: float = 0.0006

    @property
    def delta0(self) -> float:
        return 0.5 + self.gamma / math.log(2) - self.eps2


CONSTANTS = MaxGeomConstants()
HALF_GEOM = SubExpParams(alpha=3.31, beta=2.0)


def harmonic(n: int) -> float:
    if n < 1:
        raise DomainError(f"harmonic number needs n >= 1, got {n}")
    # summing small terms first keeps the rounding error down
    return float(math.fsum(1.0 / k for k in range(n, 0, -1)))


def subexp_mgf_bound(params: SubExpParams, s: float) -> BoundValue:
    """E[exp(s(X - EX))] <= 1 + 2 alpha beta^2 s^2 for |s| <= 1/(2 beta)."""
    if abs(s) > 1.0 / (2.0 * params.beta):
        raise DomainError(f"|s| must be <= 1/(2 beta) = {1 / (2 * params.beta)}, got {s}")
    return _bv(1.0 + 2.0 * params.alpha * params.beta ** 2 * s * s)


def chernoff_sum_bound(params: SubExpParams, K: int, t: float) -> BoundValue:
    """Two-sided tail of a sum of K i.i.d. sub-exponential variables at deviation t."""
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return _bv_log(math.log(2.0) + K * math.log1p(params.alpha / 2.0) - t / (2.0 * params.beta))


def _check_max_geom(N: float, q: float) -> None:
    if N < 50:
        raise DomainError(f"N must be >= 50, got {N}")
    _check_q(q)


def _check_q(q: float) -> None:
    if not (1.0 / math.e <= q < 1.0):
        raise DomainError(f"q must lie in [1/e, 1), got {q}")


def expected_max_interval(N: int, q: float = 0.5,
                          constants: MaxGeomConstants = CONSTANTS) -> tuple[float, float]:
    """Open interval containing E[max of N i.i.d. (1-q)-geometric variables]."""
    _check_max_geom(N, q)
    c = constants
    scale = math.log(1.0 / q)
    low = (math.log(N) + c.gamma) / scale + 0.5 - c.eps2
    high = (math.log(N) + c.gamma + c.eps1) / scale + 0.5 + c.eps2
    return low, high


def max_geom_lower_tail(q: float, lam: float, constants: MaxGeomConstants = CONSTANTS) -> BoundValue:
    """Bound on Pr[E M - M >= lam].

    exp(-q^(1/2 + eps2 + (gamma + eps1)/ln(1/q) - lam)), i.e. the upper end of
    :func:`expected_max_interval` minus log_{1/q} N, substituted into
    (1 - q^t)^N <= exp(-N q^t). Writing the middle term as -(gamma + eps1) ln q
    agrees only at q = 1/e and undershoots the exact tail at q = 1/2.
    """
    _check_q(q)
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    c = constants
    expo = 0.5 + c.eps2 + (c.gamma + c.eps1) / math.log(1.0 / q) - lam
    return _bv(math.exp(-(q ** expo)))


def max_geom_upper_tail(q: float, lam: float, constants: MaxGeomConstants = CONSTANTS) -> BoundValue:
    """Bound on Pr[M - E M >= lam]."""
    _check_q(q)
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    c = constants
    lq = math.log(q)
    first = q ** (lam - 0.5 - c.eps2 - c.gamma * lq)
    second = q ** (2 * lam - 1 - 2 * c.eps2 - 2 * c.gamma * lq)
    return _bv(first + second)


def half_geom_subexp_tail(lam: float) -> BoundValue:
    """Bound on Pr[|M - E M| >= lam] for maxima of 1/2-geometric variables."""
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return HALF_GEOM.tail(lam)


def max_geom_range_tails(N: int) -> tuple[BoundValue, BoundValue]:
    """Bounds on Pr[M >= 2 log N] and Pr[M <= log N - log ln N]."""
    if N < 50:
        raise DomainError(f"N must be >= 50, got {N}")
    return _bv(1.0 / N), _bv(1.0 / N)


def sum_maxima_tail(K: int, t: float) -> BoundValue:
    """Bound on Pr[|S - E S| >= t] for a sum S of K maxima."""
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return _bv_log(math.log(2.0) + K - t / 4.0)


def required_sum_terms(N: int, a: float) -> float:
    """Smallest K for which sum_maxima_tail(K, aK) <= 2/N; needs a > 4."""
    if a <= 4:
        raise DomainError(f"a must exceed 4, got {a}")
    return math.log(N) / (a / 4.0 - 1.0)


def average_estimate_tail(N: int, K: int) -> BoundValue:
    """Bound on Pr[|S/K - log N| >= 4.7]."""
    if N < 50:
        raise DomainError(f"N must be >= 50, got {N}")
    need = 4 * math.log2(N)
    if K < need:
        raise DomainError(f"K must be >= 4 log2 N = {need:.3f} for N={N}, got K={K}")
    return _bv(2.0 / N)


def epidemic_expected_time(n: int) -> float:
    """Mean parallel time of a one-seed epidemic among n agents."""
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    return (n - 1) / n * harmonic(n - 1)


def epidemic_tail(n: int, alpha_u: float) -> BoundValue:
    """Bound on Pr[T > alpha_u ln n] for a full-population epidemic."""
    if alpha_u <= 0:
        raise DomainError(f"alpha_u must be positive, got {alpha_u}")
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    return _bv_log(math.log(4.0) + (1.0 - alpha_u / 4.0) * math.log(n))


def partial_epidemic_tail(a: float, c: float, alpha_u: float) -> BoundValue:
    """Bound on Pr[T > alpha_u ln a] for an epidemic confined to a = n/c agents."""
    if c < 1:
        raise DomainError(f"c must be >= 1, got {c}")
    if a <= 1:
        raise DomainError(f"a must exceed 1, got {a}")
    return _bv(float(a) ** (-((alpha_u - 4 * c) ** 2) / (12 * c)))


def interaction_count_bound(C: float, n: float | None = None) -> tuple[float, float | None]:
    """Per-agent interaction ceiling D ln n over C ln n time, and its failure probability 1/n."""
    if C < 3:
        raise DomainError(f"C must be >= 3, got {C}")
    D = 2.0 * C + math.sqrt(12.0 * C)
    return D, (None if n is None else 1.0 / n)


def partition_tail(n: int, a: float) -> BoundValue:
    """Bound, per side, on the count of A agents leaving [n/2 - a, n/2 + a]."""
    if a <= 0:
        raise DomainError(f"a must be positive, got {a}")
    return _bv(math.exp(-2.0 * a * a / n))


def _check_delta(delta: float) -> None:
    if not (0 < delta <= 0.5):
        raise DomainError(f"delta must lie in (0, 1/2], got {delta}")


def balls_bins_decay_bound(k: int, delta: float, m: int, n: int) -> BoundValue:
    """Bound on Pr[at most delta*k of k empty bins survive m throws into n bins]."""
    _check_delta(delta)
    return _bv_log(delta * k * (math.log(2.0 * delta) + m / n))


def count_decay_bound(k: int, delta: float, T: float) -> BoundValue:
    """Bound on Pr[a state count of k drops to delta*k within parallel time T]."""
    _check_delta(delta)
    if T <= 0:
        raise DomainError(f"T must be positive, got {T}")
    return _bv_log(delta * k * (math.log(2.0 * delta) + 3.0 * T))


@dataclass(frozen=True)
class Formula:
    fn: Callable
    params: tuple[str, ...]

    def __call__(self, **kw):
        return self.fn(*(kw[p] for p in self.params))


def _interaction_D(C):
    return _bv(interaction_count_bound(C)[0])


FORMULAS: dict[str, Formula] = {
    "harmonic": Formula(lambda n: _bv(harmonic(int(n))), ("n",)),
    "subexp_mgf_bound": Formula(lambda alpha, beta, s: subexp_mgf_bound(SubExpParams(alpha, beta), s),
                                ("alpha", "beta", "s")),
    "chernoff_sum_bound": Formula(lambda alpha, beta, K, t: chernoff_sum_bound(SubExpParams(alpha, beta), int(K), t),
                                  ("alpha", "beta", "K", "t")),
    "expected_max_low": Formula(lambda N, q: _bv(expected_max_interval(int(N), q)[0]), ("N", "q")),
    "expected_max_high": Formula(lambda N, q: _bv(expected_max_interval(int(N), q)[1]), ("N", "q")),
    "max_geom_lower_tail": Formula(max_geom_lower_tail, ("q", "lambda")),
    "max_geom_upper_tail": Formula(max_geom_upper_tail, ("q", "lambda")),
    "half_geom_subexp_tail": Formula(half_geom_subexp_tail, ("lambda",)),
    "max_geom_range_tail": Formula(lambda N: max_geom_range_tails(int(N))[0], ("N",)),
    "sum_maxima_tail": Formula(lambda K, t: sum_maxima_tail(int(K), t), ("K", "t")),
    "average_estimate_tail": Formula(lambda N, K: average_estimate_tail(int(N), int(K)), ("N", "K")),
    "epidemic_expected_time": Formula(lambda n: _bv(epidemic_expected_time(int(n))), ("n",)),
    "epidemic_tail": Formula(epidemic_tail, ("n", "alpha_u")),
    "partial_epidemic_tail": Formula(partial_epidemic_tail, ("a", "c", "alpha_u")),
    "interaction_count_bound": Formula(_interaction_D, ("C",)),
    "partition_tail": Formula(partition_tail, ("n", "a")),
    "balls_bins_decay_bound": Formula(lambda k, delta, m, n: balls_bins_decay_bound(int(k), delta, int(m), int(n)),
                                      ("k", "delta", "m", "n")),
    "count_decay_bound": Formula(lambda k, delta, T: count_decay_bound(int(k), delta, T), ("k", "delta", "T")),
}


def evaluate_grid(name: str, grid: dict[str, list]) -> list[tuple[dict, BoundValue]]:
    """Evaluate a named formula over the Cartesian product of ``grid``.

    An empty value list anywhere yields no rows.
    """
    if name not in FORMULAS:
        raise KeyError(name)
    formula = FORMULAS[name]
    missing = [p for p in formula.params if p not in grid]
    if missing:
        raise DomainError(f"{name} needs parameters {', '.join(missing)}")
    axes = [list(grid[p]) for p in formula.params]
    rows = []
    if any(len(a) == 0 for a in axes):
        return rows
    for combo in np.ndindex(*(len(a) for a in axes)):
        kw = {p: axes[j][combo[j]] for j, p in enumerate(formula.params)}
        rows.append((kw, formula(**kw)))
    return rows
