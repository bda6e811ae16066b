"""Spearman rank correlation and Holm-Bonferroni step-down adjustment."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .errors import ContractViolation


@dataclass(frozen=True)
class CorrelationOutcome:
    rho: float | None
    p_value: float | None
    n: int

    @property
    def defined(self) -> bool:
        return self.rho is not None


@dataclass(frozen=True)
class MultipleTestResult:
    adjusted: np.ndarray
    reject: np.ndarray
    alpha: float


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties sharing the mean of the positions they span.

    Small nonnegative integer vectors (the usual case for per-patient counts)
    take a counting path that avoids sorting.
    """
    a = np.asarray(values)
    n = a.shape[0]
    if n == 0:
        return np.empty(0)
    if a.dtype.kind in "iub":
        lo = int(a.min())
        hi = int(a.max())
        if lo >= 0 and hi <= 4 * n:
            freq = np.bincount(a.astype(np.int64), minlength=hi + 1)
            upper = np.cumsum(freq)
            mean_rank = upper - (freq - 1) / 2.0
            return mean_rank[a.astype(np.int64)]
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    np.not_equal(sorted_a[1:], sorted_a[:-1], out=boundary[1:])
    starts = np.flatnonzero(boundary)
    ends = np.append(starts[1:], n)
    group_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def centered_ranks(values) -> np.ndarray | None:
    r = average_ranks(values)
    r -= r.mean()
    if not np.any(r):
        return None
    return r


def _t_pvalue(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return 0.0
    df = n - 2
    t = rho * math.sqrt(df / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * special.stdtr(df, -abs(t))))


def spearman(x, y) -> CorrelationOutcome:
    """Spearman's rho with a two-sided t-approximation p-value.

    The outcome is undefined (``rho is None``) when either input is constant
    or fewer than three observations are available.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.ndim != 1 or x.shape != y.shape:
        raise ContractViolation(f"spearman needs equal-length vectors, got {x.shape} and {y.shape}")
    n = x.shape[0]
    if n == 0:
        raise ContractViolation("spearman needs at least one observation")
    if n < 3:
        return CorrelationOutcome(None, None, n)
    rx = centered_ranks(x)
    if rx is None:
        return CorrelationOutcome(None, None, n)
    ry = centered_ranks(y)
    if ry is None:
        return CorrelationOutcome(None, None, n)
    return rank_correlation(rx, ry)


def rank_correlation(rx: np.ndarray, ry: np.ndarray) -> CorrelationOutcome:
    n = rx.shape[0]
    num = float(np.dot(rx, ry))
    den = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    rho = min(1.0, max(-1.0, num / den))
    return CorrelationOutcome(rho, _t_pvalue(rho, n), n)


def spearman_many(x, ys) -> list[CorrelationOutcome]:
    """Correlate one vector against several, ranking ``x`` only once."""
    x = np.asarray(x)
    n = x.shape[0]
    rx = centered_ranks(x) if n >= 3 else None
    out = []
    for y in ys:
        y = np.asarray(y)
        if y.shape != x.shape:
            raise ContractViolation("spearman needs equal-length vectors")
        if rx is None:
            out.append(CorrelationOutcome(None, None, n))
            continue
        ry = centered_ranks(y)
        if ry is None:
            out.append(CorrelationOutcome(None, None, n))
        else:
            out.append(rank_correlation(rx, ry))
    return out


def holm_bonferroni(p_values, alpha: float = 0.05) -> MultipleTestResult:
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise ContractViolation("p_values must be one-dimensional")
    if not 0.0 < alpha < 1.0:
        raise ContractViolation(f"alpha must lie in (0, 1), got {alpha}")
    if np.any(np.isnan(p)) or np.any((p < 0.0) | (p > 1.0)):
        raise ContractViolation("p-values must lie in [0, 1]")
    m = p.shape[0]
    if m == 0:
        return MultipleTestResult(np.empty(0), np.empty(0, dtype=bool), alpha)
    order = np.argsort(p, kind="mergesort")
    multipliers = np.arange(m, 0, -1, dtype=float)
    stepped = np.minimum(1.0, multipliers * p[order])
    stepped = np.maximum.accumulate(stepped)
    adjusted = np.empty(m)
    adjusted[order] = stepped
    return MultipleTestResult(adjusted, adjusted <= alpha, alpha)
