"""Small statistics helpers shared by the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

Z95 = 1.959963984540054


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo point estimate with its confidence interval."""

    value: float
    ci_low: float
    ci_high: float
    n: int
    seed: int

    def __post_init__(self):
        if not (self.ci_low <= self.value <= self.ci_high):
            raise ValueError("estimate must lie inside its interval")
        if self.n < 1:
            raise ValueError("need at least one replica")

    def contains(self, x: float) -> bool:
        return self.ci_low <= x <= self.ci_high

    def width(self) -> float:
        return self.ci_high - self.ci_low


def wilson(k: int, n: int, seed: int, z: float = Z95) -> Estimate:
    """Wilson score interval for a proportion."""
    if n < 1:
        raise ValueError("empty sample")
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the interval provably contains the raw proportion; clamp away the
    # floating-point dust so that empty and full counts stay exactly 0 and 1
    lo = min(max(0.0, centre - half), p)
    hi = max(min(1.0, centre + half), p)
    return Estimate(value=p, ci_low=lo, ci_high=hi, n=n, seed=seed)


def t_interval(samples, seed: int, level: float = 0.95) -> Estimate:
    """Mean with a two-sided Student t interval."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    m = float(x.mean())
    if n < 2:
        return Estimate(value=m, ci_low=m, ci_high=m, n=n, seed=seed)
    se = float(x.std(ddof=1)) / math.sqrt(n)
    q = float(sps.t.ppf(0.5 + level / 2, n - 1))
    return Estimate(value=m, ci_low=m - q * se, ci_high=m + q * se, n=n, seed=seed)


def batch_mean_interval(per_batch_values, seed: int) -> Estimate:
    """t interval over batch means (used for covariance-type estimators)."""
    return t_interval(per_batch_values, seed)


def paired_covariance_batches(a, b, n_batches: int):
    """Per-batch covariance estimates of two paired 0/1 (or real) samples."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    if n != len(b) or n < 2 * n_batches:
        raise ValueError("need at least two paired samples per batch")
    edges = np.linspace(0, n, n_batches + 1, dtype=int)
    out = []
    for lo, hi in zip(edges, edges[1:]):
        sa, sb = a[lo:hi], b[lo:hi]
        out.append(float((sa * sb).mean() - sa.mean() * sb.mean()))
    return out


def ks_normal_pvalue(samples) -> float:
    """Kolmogorov-Smirnov p-value of the samples against a fitted normal."""
    x = np.asarray(samples, dtype=float)
    s = x.std(ddof=1)
    if s == 0:
        return 0.0
    z = (x - x.mean()) / s
    return float(sps.kstest(z, "norm").pvalue)


def binom_test_pvalue(k: int, n: int, p: float) -> float:
    return float(sps.binomtest(k, n, p).pvalue)
