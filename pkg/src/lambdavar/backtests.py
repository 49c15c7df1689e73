"""Hit sequences and the coverage / P&L backtests for VaR and Lambda-VaR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import special
from scipy.special import xlogy

from .distributions import PredictiveDistribution
from .errors import DataError
from .lambda_calibration import LambdaFunction
from .poisson_binomial import pb_build, pb_quantile
from .risk_measures import RiskForecast

ACCEPT = "accept"
REJECT = "reject"
TEST_IDS = ("test1", "test2", "test3", "kupiec_pof", "kupiec_lambda")


@dataclass(frozen=True, eq=False)
class HitSequence:
    hits: np.ndarray
    coverage: np.ndarray
    flags: tuple[frozenset[str], ...] = ()

    def __post_init__(self):
        hits = np.asarray(self.hits, dtype=np.int64)
        cov = np.asarray(self.coverage, dtype=float)
        if hits.shape != cov.shape or hits.ndim != 1:
            raise DataError("hits and coverage must be 1-d and of equal length")
        if np.any((hits != 0) & (hits != 1)):
            raise DataError("hits must be 0 or 1")
        if np.any((cov <= 0) | (cov >= 1)):
            raise DataError("coverage probabilities must lie in (0, 1)")
        flags = tuple(self.flags) or tuple(frozenset() for _ in range(hits.size))
        if len(flags) != hits.size:
            raise DataError("one flag set per day is required")
        object.__setattr__(self, "hits", hits)
        object.__setattr__(self, "coverage", cov)
        object.__setattr__(self, "flags", flags)

    def __len__(self) -> int:
        return self.hits.size

    @property
    def n_violations(self) -> int:
        return int(self.hits.sum())


@dataclass
class TestReport:
    test_id: str
    statistic: float
    p_value: float | None
    alpha: float
    verdict: str
    n_violations: int
    metadata: dict[str, Any] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def accepted(self) -> bool:
        return self.verdict == ACCEPT

    def to_dict(self) -> dict[str, Any]:
        return {"test_id": self.test_id, "statistic": self.statistic,
                "p_value": self.p_value, "alpha": self.alpha, "verdict": self.verdict,
                "n_violations": self.n_violations, "metadata": dict(self.metadata)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TestReport":
        return cls(d["test_id"], d["statistic"], d["p_value"], d["alpha"], d["verdict"],
                   d["n_violations"], dict(d.get("metadata", {})))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"significance level must lie in (0, 1), got {alpha}")


def hit_sequence(returns, forecasts: Sequence[RiskForecast]) -> HitSequence:
    """I_t = 1 iff the realized return is strictly below the forecast threshold."""
    x = np.asarray(returns, dtype=float)
    if x.ndim != 1 or x.size != len(forecasts):
        raise DataError(f"{x.size} returns for {len(forecasts)} forecasts")
    thr = np.array([f.threshold_return for f in forecasts])
    return HitSequence((x < thr).astype(np.int64),
                       np.array([f.coverage_prob for f in forecasts]),
                       tuple(f.flags for f in forecasts))


def test1_coverage(h: HitSequence, alpha: float = 0.10) -> TestReport:
    """Exact one-sided coverage test on the Poisson-Binomial violation count.

    Rejects when P(Z1 <= z1) > 1 - alpha.  ``p_value`` is the upper tail
    P(Z1 >= z1); the two-sided region bounds are kept in the metadata.
    """
    _check_alpha(alpha)
    z1 = h.n_violations
    d = pb_build(h.coverage)
    cdf = d.cdf(z1)
    verdict = REJECT if cdf > 1.0 - alpha else ACCEPT
    meta = {
        "T": len(h),
        "expected_violations": float(h.coverage.sum()),
        "cdf_at_statistic": cdf,
        "lower_critical": pb_quantile(d, alpha / 2),
        "upper_critical": pb_quantile(d, 1 - alpha / 2),
        "prob_below_lower": d.cdf(pb_quantile(d, alpha / 2) - 1),
    }
    return TestReport("test1", float(z1), d.sf(z1), alpha, verdict, z1, meta)


test1_coverage.__test__ = False


def test2_asymptotic(h: HitSequence, alpha: float = 0.10) -> TestReport:
    """Two-sided normal test on the standardized violation count."""
    _check_alpha(alpha)
    lam = h.coverage
    var = float(np.sum(lam * (1.0 - lam)))
    if not var > 0:
        raise DataError("zero variance in coverage probabilities")
    z2 = float(np.sum(h.hits - lam) / math.sqrt(var))
    crit = float(special.ndtri(1.0 - alpha / 2))
    p = float(2.0 * special.ndtr(-abs(z2)))
    verdict = REJECT if (z2 < -crit or z2 > crit) else ACCEPT
    return TestReport("test2", z2, min(p, 1.0), alpha, verdict, h.n_violations,
                      {"T": len(h), "critical": crit})


test2_asymptotic.__test__ = False


def simulate_violation_counts(models: Sequence[PredictiveDistribution], thresholds,
                              n_sims: int, rng: np.random.Generator) -> np.ndarray:
    """Violation counts of ``n_sims`` scenarios drawn day by day from ``models``.

    ``thresholds`` is (T,) or (n_measures, T); every measure is evaluated on
    the same draws.  Returns counts of shape (n_sims,) or (n_measures, n_sims).
    """
    thr = np.asarray(thresholds, dtype=float)
    single = thr.ndim == 1
    thr = np.atleast_2d(thr)
    if thr.shape[1] != len(models):
        raise DataError(f"{len(models)} stored models for {thr.shape[1]} days")
    counts = np.zeros((thr.shape[0], n_sims), dtype=np.int64)
    for t, model in enumerate(models):
        if model is None:
            raise DataError(f"missing stored model for day {t}")
        draws = model.sample(rng, n_sims)
        counts += draws[None, :] < thr[:, t, None]
    return counts[0] if single else counts


def test3_from_counts(h: HitSequence, sim_counts: np.ndarray, alpha: float) -> TestReport:
    _check_alpha(alpha)
    T = len(h)
    k = h.n_violations
    z3 = float((h.coverage.sum() - k) / T)
    m = sim_counts.size
    # Z3 <= z3 exactly when the simulated count is >= the observed count
    p = (1 + int(np.count_nonzero(sim_counts >= k))) / (m + 1)
    verdict = REJECT if p < alpha else ACCEPT
    return TestReport("test3", z3, p, alpha, verdict, k,
                      {"T": T, "n_sims": m, "mean_sim_violations": float(sim_counts.mean())})


test3_from_counts.__test__ = False


def test3_simulation(h: HitSequence, stored_models: Sequence[PredictiveDistribution],
                     forecasts: Sequence[RiskForecast], n_sims: int = 10_000,
                     alpha: float = 0.10, seed=0) -> TestReport:
    """Monte-Carlo test that the stored predictive distributions were correct.

    Thresholds stay fixed at the forecast values; only returns are redrawn.
    """
    if n_sims < 1000:
        raise ValueError("Test 3 needs at least 1000 simulations")
    if len(stored_models) != len(h) or len(forecasts) != len(h):
        raise DataError("need one stored model and one forecast per day")
    rng = np.random.default_rng(seed)
    thr = np.array([f.threshold_return for f in forecasts])
    counts = simulate_violation_counts(stored_models, thr, n_sims, rng)
    return test3_from_counts(h, counts, alpha)


test3_simulation.__test__ = False


def kupiec_lr(n_violations: int, T: int, lambda0: float) -> float:
    n = n_violations
    rate = n / T
    ll_null = xlogy(n, lambda0) + xlogy(T - n, 1.0 - lambda0)
    ll_alt = xlogy(n, rate) + xlogy(T - n, 1.0 - rate)
    return float(max(-2.0 * (ll_null - ll_alt), 0.0))


def chi2_1_cdf(x: float) -> float:
    return float(2.0 * special.ndtr(math.sqrt(x)) - 1.0) if x > 0 else 0.0


def kupiec_pof(n_violations: int, T: int, lambda0: float, alpha: float = 0.10,
               test_id: str = "kupiec_pof") -> TestReport:
    """Kupiec proportion-of-failures test, one-sided towards too many violations."""
    _check_alpha(alpha)
    if not 0 <= n_violations <= T or T < 1:
        raise ValueError(f"need 0 <= n <= T, got n={n_violations}, T={T}")
    if not 0.0 < lambda0 < 1.0:
        raise ValueError("lambda0 must lie in (0, 1)")
    lr = kupiec_lr(n_violations, T, lambda0)
    crit = float(special.ndtri(1.0 - alpha / 2)) ** 2
    p = float(2.0 * special.ndtr(-math.sqrt(lr)))
    if n_violations / T <= lambda0:
        verdict = ACCEPT
    else:
        verdict = REJECT if lr > crit else ACCEPT
    return TestReport(test_id, lr, p, alpha, verdict, n_violations,
                      {"T": T, "lambda0": lambda0, "critical": crit})


def kupiec_lambda(n_violations: int, T: int, f: LambdaFunction, alpha: float = 0.10) -> TestReport:
    return kupiec_pof(n_violations, T, f.lambda_max, alpha, test_id="kupiec_lambda")
