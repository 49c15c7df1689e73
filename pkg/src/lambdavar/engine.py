"""Rolling-window backtest engine, aggregation and synthetic data."""

from __future__ import annotations

import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Any, Iterable, Sequence

import numpy as np

from .backtests import (ACCEPT, REJECT, TEST_IDS, HitSequence, TestReport, hit_sequence,
                        kupiec_pof, simulate_violation_counts, test1_coverage, test2_asymptotic,
                        test3_from_counts)
from .distributions import (FITTERS, GarchTDistribution, PredictiveDistribution, ReturnSeries,
                            simulate_garch_t)
from .errors import DataError, LambdaVarError
from .lambda_calibration import (DECREASING, INCREASING, BenchmarkPanel, LambdaConfig,
                                 LambdaFunction, calibrate_lambda)
from .risk_measures import RiskForecast, lambda_var, var

log = logging.getLogger(__name__)

DEFAULT_WINDOW = {"historical": 250, "gaussian": 250, "garch_t": 500}


@dataclass(frozen=True)
class Measure:
    """A risk measure evaluated every day: plain VaR or a Lambda-VaR variant."""

    kind: str  # "var" or "lambda_var"
    direction: str | None = None
    benchmark_var_level: float | None = None

    @property
    def key(self) -> str:
        if self.kind == "var":
            return "var"
        tag = "incr" if self.direction == INCREASING else "decr"
        return f"lvar_{tag}_b{self.benchmark_var_level:g}"

    @classmethod
    def from_key(cls, key: str) -> "Measure":
        if key == "var":
            return cls("var")
        _, tag, level = key.split("_")
        return cls("lambda_var", INCREASING if tag == "incr" else DECREASING, float(level[1:]))

    def label(self, lambda_max: float) -> str:
        if self.kind == "var":
            return f"VaR {lambda_max:.0%}"
        tag = "incr" if self.direction == INCREASING else "decr"
        return f"LVaR {lambda_max:.0%} ({tag}) (VaR {self.benchmark_var_level:.0%})"


@dataclass(frozen=True, eq=False)
class BacktestPlan:
    asset: ReturnSeries
    benchmarks: BenchmarkPanel
    model: str = "historical"
    window: int | None = None
    horizon: int = 250
    n_windows: int | None = None
    first_eval: int | None = None
    lambda_config: LambdaConfig = field(default_factory=LambdaConfig)
    directions: tuple[str, ...] = (INCREASING, DECREASING)
    benchmark_var_levels: tuple[float, ...] = (0.05, 0.01)
    calibration_window: int = 250
    recalibrate: str = "daily"
    tests: tuple[str, ...] = TEST_IDS
    alpha: float = 0.10
    n_sims: int = 10_000
    seed: int = 0
    asset_id: str = ""
    failure_budget: float = 0.01

    def __post_init__(self):
        if self.model not in FITTERS:
            raise ValueError(f"unknown model {self.model!r}; choose from {tuple(FITTERS)}")
        if self.recalibrate not in ("daily", "window"):
            raise ValueError("recalibrate must be 'daily' or 'window'")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if "test3" in self.tests and self.n_sims < 1000:
            raise ValueError("Test 3 needs at least 1000 simulations")
        unknown = set(self.tests) - set(TEST_IDS)
        if unknown:
            raise ValueError(f"unknown tests {sorted(unknown)}")
        if len(self.asset) != len(self.benchmarks) or self.asset.dates != self.benchmarks.dates:
            raise DataError("asset and benchmark panel must share dates")

    @property
    def estimation_window(self) -> int:
        return self.window or DEFAULT_WINDOW[self.model]

    def measures(self) -> list[Measure]:
        out = [Measure("var")]
        for d in self.directions:
            for b in self.benchmark_var_levels:
                out.append(Measure("lambda_var", d, b))
        return out

    def lambda_config_for(self, m: Measure) -> LambdaConfig:
        return replace(self.lambda_config, direction=m.direction,
                       benchmark_var_level=m.benchmark_var_level)

    def schedule(self) -> list[tuple[int, int]]:
        """Evaluation spans [start, stop) of consecutive ``horizon``-day windows."""
        start = self.first_eval
        if start is None:
            start = max(self.estimation_window, self.calibration_window)
        if start < self.estimation_window or start < self.calibration_window:
            raise DataError("not enough history before the first evaluation day")
        available = (len(self.asset) - start) // self.horizon
        n = available if self.n_windows is None else self.n_windows
        if n < 1 or n > available:
            raise DataError(
                f"series of {len(self.asset)} days cannot hold {n} windows of {self.horizon} "
                f"after day {start}")
        return [(start + k * self.horizon, start + (k + 1) * self.horizon) for k in range(n)]


@dataclass(eq=False)
class DayRecord:
    t: int
    date: date | None
    model: PredictiveDistribution | None
    forecasts: dict[str, RiskForecast]
    realized: float
    hits: dict[str, int]
    flags: frozenset[str] = frozenset()


@dataclass(eq=False)
class WindowResult:
    window_id: int
    start: int
    stop: int
    valid: bool
    hit_sequences: dict[str, HitSequence] = field(default_factory=dict)
    reports: dict[str, list[TestReport]] = field(default_factory=dict)
    reason: str = ""

    @property
    def label(self) -> str:
        return f"w{self.window_id}"


@dataclass(eq=False)
class RunArchive:
    asset_id: str
    model: str
    lambda_max: float
    measures: list[Measure]
    days: list[DayRecord]
    windows: list[WindowResult]
    config: dict[str, Any] = field(default_factory=dict)

    def window_days(self, w: WindowResult) -> list[DayRecord]:
        return [d for d in self.days if w.start <= d.t < w.stop]


def _unit_seed(*parts: Any) -> int:
    text = "|".join(str(p) for p in parts).encode()
    return zlib.crc32(text)


def _fit(model: str, window: np.ndarray, previous: PredictiveDistribution | None):
    if model == "garch_t" and isinstance(previous, GarchTDistribution):
        return FITTERS[model](window, warm_start=previous)
    return FITTERS[model](window)


def run_backtest(plan: BacktestPlan) -> RunArchive:
    """Fit, forecast, record hits and run the configured tests window by window.

    The forecast for day t uses only returns up to t - 1.  A failed fit
    reuses the previous day's model and flags the day; a window with more
    than ``failure_budget`` flagged days, or with a day lacking any model,
    is marked invalid and not tested.
    """
    W = plan.estimation_window
    measures = plan.measures()
    x = plan.asset.values
    dates = plan.asset.dates
    days: list[DayRecord] = []
    windows: list[WindowResult] = []
    previous: PredictiveDistribution | None = None

    for wid, (start, stop) in enumerate(plan.schedule()):
        lambdas: dict[str, LambdaFunction] = {}
        failures = 0
        missing = False
        window_days: list[DayRecord] = []
        for t in range(start, stop):
            flags = set()
            try:
                dist = _fit(plan.model, x[t - W:t], previous)
            except LambdaVarError as exc:
                log.debug("fit failed on day %d for %s: %s", t, plan.asset_id, exc)
                flags.add("fit_failed")
                failures += 1
                dist = previous
            previous = dist

            if plan.recalibrate == "daily" or not lambdas:
                for m in measures[1:]:
                    lambdas[m.key] = calibrate_lambda(plan.benchmarks, plan.lambda_config_for(m),
                                                      t, plan.calibration_window)

            forecasts: dict[str, RiskForecast] = {}
            hits: dict[str, int] = {}
            if dist is None:
                missing = True
            else:
                for m in measures:
                    fc = (var(dist, plan.lambda_config.lambda_max) if m.kind == "var"
                          else lambda_var(dist, lambdas[m.key]))
                    forecasts[m.key] = fc
                    hits[m.key] = int(x[t] < fc.threshold_return)
                    flags |= fc.flags
            rec = DayRecord(t, dates[t], dist, forecasts, float(x[t]), hits, frozenset(flags))
            window_days.append(rec)
        days.extend(window_days)

        if missing or failures > plan.failure_budget * plan.horizon:
            reason = "missing model" if missing else f"{failures} failed fits"
            log.warning("window %d of %s/%s invalid: %s", wid, plan.asset_id, plan.model, reason)
            windows.append(WindowResult(wid, start, stop, False, reason=reason))
            continue
        windows.append(_test_window(plan, wid, start, stop, window_days, measures))

    return RunArchive(plan.asset_id, plan.model, plan.lambda_config.lambda_max, measures,
                      days, windows, _plan_summary(plan))


def _test_window(plan: BacktestPlan, wid: int, start: int, stop: int,
                 window_days: list[DayRecord], measures: list[Measure]) -> WindowResult:
    realized = np.array([d.realized for d in window_days])
    seqs = {m.key: hit_sequence(realized, [d.forecasts[m.key] for d in window_days])
            for m in measures}
    sim_counts = None
    if "test3" in plan.tests:
        rng = np.random.default_rng(_unit_seed(plan.seed, plan.asset_id, plan.model, wid))
        thr = np.array([[d.forecasts[m.key].threshold_return for d in window_days]
                        for m in measures])
        sim_counts = simulate_violation_counts([d.model for d in window_days], thr,
                                               plan.n_sims, rng)
    meta = {"asset": plan.asset_id, "model": plan.model, "window": wid}

    reports: dict[str, list[TestReport]] = {}
    for i, m in enumerate(measures):
        h = seqs[m.key]
        out = []
        for test_id in plan.tests:
            if test_id == "test1":
                rep = test1_coverage(h, plan.alpha)
            elif test_id == "test2":
                rep = test2_asymptotic(h, plan.alpha)
            elif test_id == "test3":
                rep = test3_from_counts(h, sim_counts[i], plan.alpha)
            elif test_id == "kupiec_pof" and m.kind == "var":
                rep = kupiec_pof(h.n_violations, len(h), plan.lambda_config.lambda_max, plan.alpha)
            elif test_id == "kupiec_lambda" and m.kind == "lambda_var":
                # every daily Lambda shares the same maximum, lambda_max
                rep = kupiec_pof(h.n_violations, len(h), plan.lambda_config.lambda_max,
                                 plan.alpha, test_id="kupiec_lambda")
            else:
                continue
            rep.metadata.update(meta, measure=m.key)
            out.append(rep)
        reports[m.key] = out
        verdicts = {r.test_id: r.verdict for r in out}
        if verdicts.get("kupiec_lambda") == REJECT and verdicts.get("test1") == ACCEPT:
            # the max-Lambda Kupiec rejection is claimed to imply a Test 1 rejection
            log.warning("nesting counterexample: %s/%s window %d %s, %d violations",
                        plan.asset_id, plan.model, wid, m.key, h.n_violations)
    return WindowResult(wid, start, stop, True, seqs, reports)


def _plan_summary(plan: BacktestPlan) -> dict[str, Any]:
    cfg = plan.lambda_config
    return {"model": plan.model, "window": plan.estimation_window, "horizon": plan.horizon,
            "alpha": plan.alpha, "n_sims": plan.n_sims, "seed": plan.seed,
            "lambda_min": cfg.lambda_min, "lambda_max": cfg.lambda_max,
            "equipartition": cfg.equipartition, "recalibrate": plan.recalibrate,
            "calibration_window": plan.calibration_window}


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------

@dataclass
class AcceptanceRow:
    n: int
    avg_violations: float
    acceptance: dict[str, float]


@dataclass
class AcceptanceTable:
    """Rows keyed by (model, measure key, window id)."""

    rows: dict[tuple[str, str, int], AcceptanceRow]
    lambda_max: float = 0.01

    @property
    def models(self) -> list[str]:
        return sorted({k[0] for k in self.rows})

    @property
    def measure_keys(self) -> list[str]:
        order = {"var": 0}
        return sorted({k[1] for k in self.rows}, key=lambda s: (order.get(s, 1), s))

    @property
    def window_ids(self) -> list[int]:
        return sorted({k[2] for k in self.rows})

    def overall(self, model: str | None = None, measure_prefix: str = "",
                test_id: str = "test1") -> float:
        """Acceptance rate pooled over all matching rows, weighted by count."""
        num = den = 0.0
        for (mod, key, _), row in self.rows.items():
            if (model is None or mod == model) and key.startswith(measure_prefix) \
                    and test_id in row.acceptance:
                num += row.acceptance[test_id] * row.n
                den += row.n
        if den == 0:
            raise KeyError(f"no rows for {model}/{measure_prefix}/{test_id}")
        return num / den


def aggregate(archives: Sequence[RunArchive]) -> AcceptanceTable:
    if not archives:
        raise ValueError("nothing to aggregate")
    acc: dict[tuple[str, str, int], dict[str, list]] = {}
    for arc in archives:
        for w in arc.windows:
            if not w.valid:
                continue
            for key, seq in w.hit_sequences.items():
                slot = acc.setdefault((arc.model, key, w.window_id), {"viol": [], "tests": {}})
                slot["viol"].append(seq.n_violations)
                for rep in w.reports.get(key, []):
                    slot["tests"].setdefault(rep.test_id, []).append(rep.verdict == ACCEPT)
    rows = {}
    for k in sorted(acc):
        slot = acc[k]
        rows[k] = AcceptanceRow(len(slot["viol"]), float(np.mean(slot["viol"])),
                                {t: float(np.mean(v)) for t, v in sorted(slot["tests"].items())})
    return AcceptanceTable(rows, archives[0].lambda_max)


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------

GENERATORS = ("iid_gaussian", "garch_t", "regime_shift")
_START_DATE = np.datetime64("2005-01-03")


def business_dates(n: int, start=_START_DATE) -> tuple[date, ...]:
    days = np.busday_offset(start, np.arange(n), roll="forward")
    return tuple(d.item() for d in days)


def gen_synthetic(generator: str, params: dict[str, float] | None, length: int,
                  seed: int, name: str = "") -> ReturnSeries:
    """Reproducible synthetic returns.

    ``regime_shift`` is Gaussian whose volatility is multiplied by ``factor``
    (default 2) on days ``[shift_start, shift_end)``, by default the second
    half of the sample.
    """
    p = dict(params or {})
    if length < 1:
        raise DataError("length must be positive")
    rng = np.random.default_rng(seed)
    if generator == "iid_gaussian":
        sigma = p.pop("sigma", 0.01)
        mu = p.pop("mu", 0.0)
        if sigma <= 0:
            raise DataError("sigma must be positive")
        values = mu + sigma * rng.standard_normal(length)
    elif generator == "garch_t":
        values = simulate_garch_t(p.pop("omega", 1e-6), p.pop("alpha", 0.08),
                                  p.pop("beta", 0.90), p.pop("nu", 6.0), length, rng)
    elif generator == "regime_shift":
        sigma = p.pop("sigma", 0.01)
        factor = p.pop("factor", 2.0)
        lo = int(p.pop("shift_start", length // 2))
        hi = int(p.pop("shift_end", length))
        if sigma <= 0 or factor <= 0 or not 0 <= lo <= hi <= length:
            raise DataError("invalid regime_shift parameters")
        vol = np.full(length, sigma)
        vol[lo:hi] *= factor
        values = vol * rng.standard_normal(length)
    else:
        raise DataError(f"unknown generator {generator!r}; choose from {GENERATORS}")
    if p:
        raise DataError(f"unused generator parameters {sorted(p)}")
    return ReturnSeries(business_dates(length), np.clip(values, -0.95, None), name)


def synthetic_panel(generator: str, n_assets: int = 12, n_benchmarks: int = 3,
                    length: int = 2000, seed: int = 0,
                    params: dict[str, float] | None = None
                    ) -> tuple[list[ReturnSeries], BenchmarkPanel]:
    assets = [gen_synthetic(generator, params, length, _unit_seed(seed, "asset", i), f"asset{i:02d}")
              for i in range(n_assets)]
    benches = [gen_synthetic(generator, params, length, _unit_seed(seed, "bench", j), f"bench{j}")
               for j in range(n_benchmarks)]
    return assets, BenchmarkPanel.from_series(benches)


def _run_plan(plan: BacktestPlan) -> RunArchive:
    return run_backtest(plan)


def run_protocol(assets: Sequence[ReturnSeries], benchmarks: BenchmarkPanel,
                 models: Iterable[str] = ("historical", "gaussian", "garch_t"),
                 n_jobs: int | None = None, **plan_kwargs) -> list[RunArchive]:
    """Backtest every (asset, model) pair; per-unit seeds come from the master seed.

    All models share the evaluation days, which start after the longest
    estimation window unless ``first_eval`` is given.
    """
    models = list(models)
    if "first_eval" not in plan_kwargs:
        win = plan_kwargs.get("window")
        longest = max(win or DEFAULT_WINDOW[m] for m in models)
        plan_kwargs["first_eval"] = max(longest, plan_kwargs.get("calibration_window", 250))
    seed = plan_kwargs.pop("seed", 0)
    plans = [BacktestPlan(asset=a, benchmarks=benchmarks, model=m, asset_id=a.name or f"asset{i}",
                          seed=_unit_seed(seed, a.name or i, m), **plan_kwargs)
             for i, a in enumerate(assets) for m in models]
    n_jobs = n_jobs or os.cpu_count() or 1
    if n_jobs <= 1 or len(plans) == 1:
        return [run_backtest(p) for p in plans]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_plan, plans))
