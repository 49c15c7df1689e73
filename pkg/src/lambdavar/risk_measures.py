"""VaR and Lambda-VaR forecasts from a predictive distribution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import EmpiricalDistribution, PredictiveDistribution
from .lambda_calibration import DECREASING, LambdaFunction, eval_lambda

CROSSING_TOL = 1e-10
_SCAN_POINTS = 64


@dataclass(frozen=True)
class RiskForecast:
    """A one-day risk forecast.

    ``var_value`` follows the positive-loss convention; ``threshold_return``
    is its negation on the return axis.  ``coverage_prob`` is the model
    probability of a return strictly below the threshold, floored away from
    zero for the historical model (see ``flags``).  ``lambda_at_threshold``
    is Lambda evaluated at the threshold, which equals the coverage only
    when the distribution has a density.
    """

    var_value: float
    threshold_return: float
    coverage_prob: float
    lambda_at_threshold: float = float("nan")
    flags: frozenset[str] = field(default_factory=frozenset)


def _coverage(dist: PredictiveDistribution, threshold: float) -> tuple[float, frozenset[str]]:
    cov = float(dist.cdf_left(threshold))
    if cov > 0.0:
        return cov, frozenset()
    if isinstance(dist, EmpiricalDistribution):
        return 1.0 / (10.0 * dist.size), frozenset({"coverage_clamped"})
    return 1e-12, frozenset({"coverage_clamped"})


def _strict_quantile(dist: PredictiveDistribution, level: float) -> float:
    """inf{x : cdf(x) > level}."""
    if isinstance(dist, EmpiricalDistribution):
        return dist.upper_quantile(level)
    return dist.quantile(level)


def var(dist: PredictiveDistribution, level: float) -> RiskForecast:
    if not 0.0 < level < 1.0:
        raise ValueError(f"VaR level must lie in (0, 1), got {level}")
    threshold = _strict_quantile(dist, level)
    cov, flags = _coverage(dist, threshold)
    return RiskForecast(-threshold, threshold, cov, level, flags)


def lambda_var(dist: PredictiveDistribution, f: LambdaFunction) -> RiskForecast:
    threshold = solve_crossing(dist, f)
    cov, flags = _coverage(dist, threshold)
    return RiskForecast(-threshold, threshold, cov, eval_lambda(f, threshold), flags | f.flags)


def solve_crossing(dist: PredictiveDistribution, f: LambdaFunction) -> float:
    """inf{x : cdf(x) > Lambda(x)}; the set is nonempty because max Lambda < 1."""
    if isinstance(dist, EmpiricalDistribution):
        return _crossing_step(dist, f)
    return _crossing_continuous(dist, f)


def _crossing_continuous(dist: PredictiveDistribution, f: LambdaFunction) -> float:
    pis, lams = f.pis, f.lambdas
    # the crossing always lies between these two quantiles
    lower = dist.quantile(f.lambda_min)
    upper = dist.quantile(f.lambda_max)
    if f.is_constant or upper == lower:
        return upper

    def gap(x):
        return dist.cdf(x) - np.interp(x, pis, lams)

    if dist.cdf(pis[0]) > lams[0]:
        return min(max(dist.quantile(lams[0]), lower), upper)

    for a, b, la, lb in zip(pis[:-1], pis[1:], lams[:-1], lams[1:]):
        if la == lb:
            if dist.cdf(b) > la:
                return min(max(dist.quantile(la), lower), upper)
            continue
        grid = np.linspace(a, b, _SCAN_POINTS + 1)
        g = gap(grid)
        above = np.nonzero(g > 0)[0]
        if above.size == 0:
            continue
        j = above[0]
        if j == 0:
            return min(max(float(a), lower), upper)
        lo, hi = float(grid[j - 1]), float(grid[j])
        while hi - lo > CROSSING_TOL:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if gap(mid) > 0:
                hi = mid
            else:
                lo = mid
        return min(max(hi, lower), upper)

    return min(max(dist.quantile(lams[-1]), lower), upper)


def _crossing_step(dist: EmpiricalDistribution, f: LambdaFunction) -> float:
    support = np.unique(dist.sorted_window)
    # F is constant on [support[k], support[k+1]) at level c[k]
    c = dist.cdf(support)
    if f.direction != DECREASING or f.is_constant:
        hit = np.nonzero(c > eval_lambda(f, support))[0]
        return float(support[hit[0]])

    nxt = np.append(support[1:], np.inf)
    for k in range(support.size):
        x = _decreasing_level_crossing(f, c[k])
        cand = max(support[k], x)
        if cand < nxt[k]:
            return float(cand)
    raise AssertionError("crossing set is empty")  # unreachable: c[-1] = 1 > max Lambda


def _decreasing_level_crossing(f: LambdaFunction, level: float) -> float:
    """inf{x : Lambda(x) < level} for a nonincreasing Lambda."""
    pis, lams = f.pis, f.lambdas
    if level > lams[0]:
        return -np.inf
    if level <= lams[-1]:
        return np.inf
    i = np.nonzero(lams >= level)[0][-1]
    la, lb = lams[i], lams[i + 1]
    return float(pis[i] + (la - level) / (la - lb) * (pis[i + 1] - pis[i]))
