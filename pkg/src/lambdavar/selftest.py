"""Fast oracle-equivalence checks, run by ``lambdavar selftest``.

Each check compares a production routine with an independent computation
(brute-force enumeration, closed forms, a dense-grid scan).
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np
from scipy.special import comb, erfc

from .backtests import HitSequence, kupiec_pof, test1_coverage
from .distributions import EmpiricalDistribution, GaussianDistribution
from .lambda_calibration import DECREASING, INCREASING, LambdaFunction
from .poisson_binomial import pb_build
from .risk_measures import lambda_var, solve_crossing, var


def brute_force_pmf(probs) -> np.ndarray:
    probs = list(probs)
    pmf = np.zeros(len(probs) + 1)
    for outcome in itertools.product((0, 1), repeat=len(probs)):
        w = 1.0
        for o, p in zip(outcome, probs):
            w *= p if o else 1.0 - p
        pmf[sum(outcome)] += w
    return pmf


def grid_crossing(cdf: Callable, f: LambdaFunction, lo: float, hi: float,
                  step: float = 1e-6) -> float:
    """First grid point where cdf > Lambda, refined by bisection on the last bracket."""
    xs = np.arange(lo, hi + step, step)
    above = np.nonzero(cdf(xs) > np.interp(xs, f.pis, f.lambdas))[0]
    j = above[0]
    if j == 0:
        return float(xs[0])
    a, b = xs[j - 1], xs[j]
    for _ in range(60):
        mid = 0.5 * (a + b)
        if cdf(mid) > np.interp(mid, f.pis, f.lambdas):
            b = mid
        else:
            a = mid
    return float(b)


def random_lambda(rng: np.random.Generator, direction: str, lo=-3.5, hi=-1.0) -> LambdaFunction:
    n = int(rng.integers(2, 6))
    pis = np.sort(rng.uniform(lo, hi, n))
    lams = np.sort(rng.uniform(0.001, 0.05, n))
    if direction == DECREASING:
        lams = lams[::-1]
    return LambdaFunction(pis, lams, direction)


def check_poisson_binomial(n_cases: int = 200, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        p = rng.uniform(0, 1, int(rng.integers(1, 16)))
        worst = max(worst, float(np.max(np.abs(pb_build(p).pmf - brute_force_pmf(p)))))
    for T in range(1, 61):
        p = float(rng.uniform(0.001, 0.999))
        k = np.arange(T + 1)
        exact = comb(T, k, exact=False) * p ** k * (1 - p) ** (T - k)
        worst = max(worst, float(np.max(np.abs(pb_build([p] * T).pmf - exact))))
    return worst


def check_constant_reduction(n_cases: int = 100, seed: int = 1) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_cases):
        level = float(rng.uniform(0.001, 0.2))
        if i % 2:
            dist = GaussianDistribution(float(rng.normal(0, 0.01)), float(rng.uniform(0.005, 0.05)))
        else:
            dist = EmpiricalDistribution(rng.standard_t(4, int(rng.integers(20, 500))) * 0.01)
        a = lambda_var(dist, LambdaFunction.constant(level))
        b = var(dist, level)
        worst = max(worst, abs(a.var_value - b.var_value), abs(a.coverage_prob - b.coverage_prob))
    return worst


def check_crossing(n_cases: int = 100, seed: int = 2, step: float = 1e-6) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_cases):
        f = random_lambda(rng, INCREASING if i % 2 == 0 else DECREASING)
        dist = GaussianDistribution(float(rng.normal(0, 0.2)), float(rng.uniform(0.7, 1.3)))

        def cdf(x, d=dist):
            # independent route: complementary error function, not ndtr
            return 0.5 * erfc(-(np.asarray(x) - d.mu) / (d.sigma * math.sqrt(2.0)))

        lo = dist.quantile(f.lambda_min) - 1e-3
        hi = dist.quantile(f.lambda_max) + 1e-3
        worst = max(worst, abs(solve_crossing(dist, f) - grid_crossing(cdf, f, lo, hi, step)))
    return worst


def check_test1_boundary() -> bool:
    cov = np.full(250, 0.01)
    rep = [test1_coverage(HitSequence(np.r_[np.ones(n), np.zeros(250 - n)], cov), 0.10).verdict
           for n in (4, 5)]
    return rep == ["accept", "reject"]


def check_kupiec() -> float:
    lr0 = kupiec_pof(0, 250, 0.01).statistic
    zero = kupiec_pof(5, 500, 0.01).statistic
    return max(abs(lr0 - (-2 * 250 * math.log(0.99))), abs(zero))


def run_all(quick: bool = True) -> list[tuple[str, bool, str]]:
    """Return (name, passed, detail) per check."""
    results = []
    err = check_poisson_binomial(60 if quick else 200)
    results.append(("poisson_binomial_vs_enumeration", err <= 1e-12, f"max err {err:.2e}"))
    err = check_constant_reduction(40 if quick else 100)
    results.append(("constant_lambda_reduction", err <= 1e-9, f"max err {err:.2e}"))
    err = check_crossing(20 if quick else 100)
    results.append(("crossing_vs_grid_oracle", err <= 1e-6, f"max err {err:.2e}"))
    results.append(("test1_boundary_T250", check_test1_boundary(), "accept at 4, reject at 5"))
    err = check_kupiec()
    results.append(("kupiec_values", err <= 1e-9, f"max err {err:.2e}"))
    return results
