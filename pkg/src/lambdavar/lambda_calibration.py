"""Piecewise-linear Lambda functions and the dynamic benchmark calibration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np

from .distributions import EmpiricalDistribution, ReturnSeries
from .errors import DataError

log = logging.getLogger(__name__)

INCREASING = "increasing"
DECREASING = "decreasing"
DIRECTIONS = (INCREASING, DECREASING)


@dataclass(frozen=True, eq=False)
class LambdaFunction:
    """Monotone piecewise-linear map from return level to probability level.

    Between the first and last breakpoint the function interpolates
    linearly; outside it is flat.  Breakpoints sharing a return level are
    merged, keeping the larger probability for increasing functions and the
    smaller for decreasing ones.
    """

    pis: np.ndarray
    lambdas: np.ndarray
    direction: str = INCREASING
    flags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        pis = np.asarray(self.pis, dtype=float).ravel()
        lams = np.asarray(self.lambdas, dtype=float).ravel()
        if pis.size == 0 or pis.size != lams.size:
            raise ValueError("need a non-empty, equal number of return and probability levels")
        if not (np.all(np.isfinite(pis)) and np.all((lams > 0) & (lams < 1))):
            raise ValueError("return levels must be finite and probabilities in (0, 1)")
        if np.any(np.diff(pis) < 0):
            raise ValueError("return levels must be sorted ascending")
        step = np.diff(lams)
        if self.direction == INCREASING and np.any(step < 0):
            raise ValueError("probability levels must be nondecreasing for an increasing function")
        if self.direction == DECREASING and np.any(step > 0):
            raise ValueError("probability levels must be nonincreasing for a decreasing function")

        keep_pis, keep_lams = [pis[0]], [lams[0]]
        pick = max if self.direction == INCREASING else min
        for x, lam in zip(pis[1:], lams[1:]):
            if x == keep_pis[-1]:
                keep_lams[-1] = pick(keep_lams[-1], lam)
            else:
                keep_pis.append(x)
                keep_lams.append(lam)
        pis = np.array(keep_pis)
        lams = np.array(keep_lams)
        pis.setflags(write=False)
        lams.setflags(write=False)
        object.__setattr__(self, "pis", pis)
        object.__setattr__(self, "lambdas", lams)
        object.__setattr__(self, "flags", frozenset(self.flags))

    @classmethod
    def constant(cls, level: float) -> "LambdaFunction":
        return cls(np.array([0.0]), np.array([level]), INCREASING)

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return [(float(x), float(lam)) for x, lam in zip(self.pis, self.lambdas)]

    @property
    def lambda_min(self) -> float:
        return float(self.lambdas.min())

    @property
    def lambda_max(self) -> float:
        return float(self.lambdas.max())

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.lambdas == self.lambdas[0]))

    def __call__(self, x):
        return eval_lambda(self, x)

    def __eq__(self, other):
        if not isinstance(other, LambdaFunction):
            return NotImplemented
        return (self.direction == other.direction
                and np.array_equal(self.pis, other.pis)
                and np.array_equal(self.lambdas, other.lambdas))

    __hash__ = None


def eval_lambda(f: LambdaFunction, x):
    """Evaluate ``f`` at ``x`` (scalar or array)."""
    out = np.interp(x, f.pis, f.lambdas)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LambdaConfig:
    lambda_min: float = 0.005
    lambda_max: float = 0.01
    n_points: int = 4
    benchmark_var_level: float = 0.01
    direction: str = INCREASING
    # "quarters": (0, lambda_max] cut into n_points parts; "thirds": n_points - 1 parts
    equipartition: str = "quarters"

    def __post_init__(self):
        if not 0 < self.lambda_min <= self.lambda_max < 1:
            raise ValueError(
                f"need 0 < lambda_min <= lambda_max < 1, got {self.lambda_min}, {self.lambda_max}")
        if self.n_points != 4:
            raise ValueError("the benchmark construction defines exactly 4 breakpoints")
        if not 0 < self.benchmark_var_level < 1:
            raise ValueError("benchmark VaR level must lie in (0, 1)")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.equipartition not in ("quarters", "thirds"):
            raise ValueError("equipartition must be 'quarters' or 'thirds'")

    def probability_levels(self) -> np.ndarray:
        """Ascending probability levels lambda_1..lambda_n."""
        n = self.n_points
        if self.equipartition == "quarters":
            inner = [i / n for i in range(2, n)]
        else:
            inner = [(i - 1) / (n - 1) for i in range(2, n)]
        levels = [self.lambda_min] + [q * self.lambda_max for q in inner] + [self.lambda_max]
        return np.clip(np.array(levels), self.lambda_min, self.lambda_max)


@dataclass(frozen=True, eq=False)
class BenchmarkPanel:
    """Aligned benchmark returns, one column per benchmark."""

    dates: tuple[date, ...]
    values: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[1] < 1:
            raise DataError("benchmark panel needs at least one series")
        if len(self.dates) != values.shape[0]:
            raise DataError("benchmark dates and values are misaligned")
        if not np.all(np.isfinite(values)):
            raise DataError("benchmark panel contains non-finite values")
        values.setflags(write=False)
        names = tuple(self.names) or tuple(f"bench{j}" for j in range(values.shape[1]))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "names", names)

    @classmethod
    def from_series(cls, series: Sequence[ReturnSeries]) -> "BenchmarkPanel":
        if not series:
            raise DataError("benchmark panel needs at least one series")
        dates = series[0].dates
        for s in series[1:]:
            if s.dates != dates:
                raise DataError(f"benchmark {s.name!r} is not aligned with {series[0].name!r}")
        return cls(dates, np.column_stack([s.values for s in series]),
                   tuple(s.name for s in series))

    @property
    def n_benchmarks(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


def calibrate_from_window(window: np.ndarray, cfg: LambdaConfig) -> LambdaFunction:
    """Build Lambda from a (days x benchmarks) block of returns."""
    window = np.asarray(window, dtype=float)
    if window.ndim == 1:
        window = window[:, None]
    if window.shape[0] < 2:
        raise DataError("calibration window needs at least 2 days")

    flags = set()
    pi1 = float(window.min())
    q = np.array([EmpiricalDistribution(window[:, j]).upper_quantile(cfg.benchmark_var_level)
                  for j in range(window.shape[1])])
    pis = np.array([pi1, q.min(), q.mean(), q.max()])
    if np.any(np.diff(pis) < 0):
        flags.add("pi_order_repaired")
        pis = np.sort(pis)

    levels = cfg.probability_levels()
    if cfg.direction == DECREASING:
        levels = levels[::-1]

    if np.all(pis == pis[0]):
        log.warning("degenerate benchmark window; using constant Lambda = %g", cfg.lambda_max)
        flags.add("degenerate_panel")
        return LambdaFunction(pis[:1], np.array([cfg.lambda_max]), cfg.direction, frozenset(flags))
    return LambdaFunction(pis, levels, cfg.direction, frozenset(flags))


def calibrate_lambda(panel: BenchmarkPanel, cfg: LambdaConfig, t: int,
                     window: int = 250) -> LambdaFunction:
    """Lambda for day ``t`` from the ``window`` benchmark days ending at ``t - 1``."""
    if t - window < 0 or t > len(panel):
        raise DataError(f"benchmark panel does not cover days {t - window}..{t - 1}")
    return calibrate_from_window(panel.values[t - window:t], cfg)
