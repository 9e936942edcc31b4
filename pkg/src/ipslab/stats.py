"""Small statistics toolbox for the Monte Carlo experiments.

Estimates travel through the package as :class:`Estimate` records (value,
standard error, confidence bounds, replica count), and replica summaries are
reduced with the mergeable :class:`RunningMoments` accumulator so worker
results can be combined in a fixed order regardless of who computed them.
Hypothesis tests wrap scipy.stats; nothing here is model-specific.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as _sps

__all__ = [
    "Estimate",
    "RunningMoments",
    "wilson_interval",
    "binomial_estimate",
    "mean_estimate",
    "pooled_se",
    "chi_square_gof",
    "ks_two_sample",
    "ols_slope",
]


@dataclass(frozen=True)
class Estimate:
    """A point estimate with normal-theory error bars."""

    value: float
    se: float
    ci_low: float
    ci_high: float
    n: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n": self.n,
        }

    def overlaps(self, other: "Estimate") -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high

    def separated_from(self, other: "Estimate") -> bool:
        return not self.overlaps(other)


class RunningMoments:
    """Mergeable count/mean/M2 accumulator (Chan et al. update rules).

    ``merge`` lets replica workers reduce partial results; the coordinator
    always merges in ascending replica-chunk order so the reduction is
    reproducible bit-for-bit.
    """

    __slots__ = ("count", "mean", "m2")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def add_many(self, xs) -> None:
        for x in xs:
            self.add(float(x))

    def merge(self, other: "RunningMoments") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        n1, n2 = self.count, other.count
        delta = other.mean - self.mean
        total = n1 + n2
        self.mean += delta * n2 / total
        self.m2 += other.m2 + delta * delta * n1 * n2 / total
        self.count = total

    @property
    def variance(self) -> float:
        """Unbiased sample variance (0 for fewer than two observations)."""
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def sem(self) -> float:
        if self.count == 0:
            return float("inf")
        return math.sqrt(self.variance / self.count)

    def estimate(self, z: float = 1.959963984540054) -> Estimate:
        half = z * self.sem
        return Estimate(
            value=self.mean,
            se=self.sem,
            ci_low=self.mean - half,
            ci_high=self.mean + half,
            n=self.count,
        )


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError(f"need at least one trial, got n={n}")
    if not 0 <= successes <= n:
        raise ValueError(f"successes={successes} outside [0, {n}]")
    phat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


def binomial_estimate(successes: int, n: int, z: float = 1.959963984540054) -> Estimate:
    """Proportion estimate with Wilson CI and the usual plug-in SE."""
    lo, hi = wilson_interval(successes, n, z)
    phat = successes / n
    se = math.sqrt(phat * (1 - phat) / n) if n > 0 else float("inf")
    return Estimate(value=phat, se=se, ci_low=lo, ci_high=hi, n=n)


def mean_estimate(xs, z: float = 1.959963984540054) -> Estimate:
    acc = RunningMoments()
    acc.add_many(xs)
    return acc.estimate(z)


def pooled_se(se_a: float, se_b: float) -> float:
    """Standard error of a difference of two independent estimates."""
    return math.sqrt(se_a * se_a + se_b * se_b)


def chi_square_gof(
    observed: Sequence[int],
    expected: Sequence[float],
    min_expected: float = 5.0,
) -> tuple:
    """Chi-square goodness of fit of observed counts against expected counts.

    Cells with expected count below ``min_expected`` are pooled (in input
    order) into a single overflow cell before the statistic is formed, which
    keeps the chi-square approximation honest on sparse tails. Returns
    (statistic, dof, p_value).
    """
    obs = np.asarray(observed, dtype=np.float64)
    exp = np.asarray(expected, dtype=np.float64)
    if obs.shape != exp.shape:
        raise ValueError("observed and expected must have the same shape")
    if not math.isclose(obs.sum(), exp.sum(), rel_tol=1e-9, abs_tol=1e-6):
        raise ValueError(
            f"totals differ: observed {obs.sum():.6f} vs expected {exp.sum():.6f}"
        )
    keep_obs, keep_exp = [], []
    pool_obs = pool_exp = 0.0
    for o, e in zip(obs, exp):
        if e < min_expected:
            pool_obs += o
            pool_exp += e
        else:
            keep_obs.append(o)
            keep_exp.append(e)
    if pool_exp > 0:
        keep_obs.append(pool_obs)
        keep_exp.append(pool_exp)
    if len(keep_exp) < 2:
        raise ValueError("fewer than two cells with positive expected count")
    o = np.array(keep_obs)
    e = np.array(keep_exp)
    statistic = float(((o - e) ** 2 / e).sum())
    dof = len(e) - 1
    p_value = float(_sps.chi2.sf(statistic, dof))
    return statistic, dof, p_value


def ks_two_sample(a, b) -> tuple:
    """Two-sample Kolmogorov-Smirnov test; returns (statistic, p_value)."""
    res = _sps.ks_2samp(np.asarray(a), np.asarray(b), method="asymp")
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    slope_se: float
    ci_low: float
    ci_high: float
    n: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_se": self.slope_se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n": self.n,
        }


def ols_slope(x, y, confidence: float = 0.95) -> SlopeFit:
    """Ordinary least squares line fit with a t-interval on the slope."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length 1-d arrays")
    n = len(x)
    if n < 3:
        raise ValueError(f"need at least 3 points for a slope CI, got {n}")
    xbar = x.mean()
    ybar = y.mean()
    sxx = float(((x - xbar) ** 2).sum())
    if sxx == 0.0:
        raise ValueError("x values are all equal")
    slope = float(((x - xbar) * (y - ybar)).sum() / sxx)
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    s2 = float((resid**2).sum() / (n - 2))
    slope_se = math.sqrt(s2 / sxx)
    tq = float(_sps.t.ppf(0.5 + confidence / 2.0, n - 2))
    return SlopeFit(
        slope=slope,
        intercept=float(intercept),
        slope_se=slope_se,
        ci_low=slope - tq * slope_se,
        ci_high=slope + tq * slope_se,
        n=n,
    )
