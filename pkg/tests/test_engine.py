import numpy as np
import pytest

import lambdavar.engine as eng
from lambdavar.backtests import (ACCEPT, REJECT, HitSequence, TestReport, simulate_violation_counts,
                                 test3_from_counts)
from lambdavar.distributions import ReturnSeries, distribution_from_params
from lambdavar.engine import (BacktestPlan, Measure, RunArchive, WindowResult,
                              _unit_seed, aggregate, business_dates, gen_synthetic, run_backtest,
                              run_protocol, synthetic_panel)
from lambdavar.errors import DataError
from lambdavar.lambda_calibration import LambdaConfig


@pytest.fixture(scope="module")
def panel():
    return synthetic_panel("iid_gaussian", n_assets=2, n_benchmarks=3, length=800, seed=5)


def small_plan(asset, bench, **kw):
    kw.setdefault("horizon", 100)
    kw.setdefault("n_sims", 1000)
    return BacktestPlan(asset=asset, benchmarks=bench, **kw)


def test_measure_keys_round_trip():
    m = Measure("lambda_var", "decreasing", 0.05)
    assert m.key == "lvar_decr_b0.05"
    assert Measure.from_key(m.key) == m
    assert Measure.from_key("var") == Measure("var")


def test_schedule(panel):
    assets, bench = panel
    plan = small_plan(assets[0], bench, model="gaussian")
    assert plan.schedule() == [(250, 350), (350, 450), (450, 550), (550, 650), (650, 750)]
    plan = small_plan(assets[0], bench, model="gaussian", n_windows=2, first_eval=300)
    assert plan.schedule() == [(300, 400), (400, 500)]
    with pytest.raises(DataError):
        small_plan(assets[0], bench, model="gaussian", n_windows=9).schedule()
    with pytest.raises(DataError):
        small_plan(assets[0], bench, model="gaussian", first_eval=100).schedule()


def test_plan_validation(panel):
    assets, bench = panel
    with pytest.raises(ValueError):
        small_plan(assets[0], bench, model="nope")
    with pytest.raises(ValueError):
        small_plan(assets[0], bench, n_sims=10)
    short = assets[0].slice(0, 500)
    with pytest.raises(DataError):
        small_plan(short, bench)


@pytest.mark.parametrize("model", ["historical", "gaussian"])
def test_dominance_every_day(panel, model):
    assets, bench = panel
    arc = run_backtest(small_plan(assets[0], bench, model=model))
    for d in arc.days:
        v = d.forecasts["var"]
        for key, f in d.forecasts.items():
            assert f.var_value >= v.var_value
            assert d.hits[key] <= d.hits["var"]


def test_deterministic(panel):
    assets, bench = panel
    a = run_backtest(small_plan(assets[1], bench, model="gaussian", n_windows=2))
    b = run_backtest(small_plan(assets[1], bench, model="gaussian", n_windows=2))
    for wa, wb in zip(a.windows, b.windows):
        assert {k: [r.to_dict() for r in v] for k, v in wa.reports.items()} == \
               {k: [r.to_dict() for r in v] for k, v in wb.reports.items()}


def _mutate(series, s, value):
    vals = series.values.copy()
    vals[s:] = value
    return ReturnSeries(series.dates, vals, series.name)


@pytest.mark.parametrize("model", ["historical", "gaussian", "garch_t"])
def test_no_look_ahead(panel, model):
    assets, bench = panel
    kw = dict(model=model, horizon=60, n_windows=1, first_eval=500, tests=("test1",))
    base = run_backtest(small_plan(assets[0], bench, **kw))
    s = 530
    vals = bench.values.copy()
    vals[s:] = -0.3
    bumped_bench = type(bench)(bench.dates, vals, bench.names)
    bumped = run_backtest(small_plan(_mutate(assets[0], s, 0.4), bumped_bench, **kw))
    for d0, d1 in zip(base.days, bumped.days):
        if d0.t > s:
            continue
        for key in d0.forecasts:
            assert d0.forecasts[key] == d1.forecasts[key], (d0.t, key)


def test_constant_returns_invalidate_window(panel):
    _, bench = panel
    flat = ReturnSeries(bench.dates, np.full(len(bench), 0.001), "flat")
    arc = run_backtest(small_plan(flat, bench, model="gaussian", n_windows=1))
    w = arc.windows[0]
    assert not w.valid and "missing" in w.reason
    assert all("fit_failed" in d.flags for d in arc.days)


def test_constant_lambda_average_violations():
    counts = []
    for seed in range(8):
        assets, bench = synthetic_panel("iid_gaussian", 3, 2, 750, seed)
        for a in assets:
            arc = run_backtest(small_plan(a, bench, model="gaussian", horizon=250,
                                          lambda_config=LambdaConfig(0.01, 0.01),
                                          tests=("test1",)))
            for w in arc.windows:
                counts.append(w.hit_sequences["lvar_incr_b0.01"].n_violations)
                assert np.array_equal(w.hit_sequences["lvar_incr_b0.01"].hits,
                                      w.hit_sequences["var"].hits)
    # 48 windows of 250 days; estimation noise inflates the binomial spread a little
    assert abs(np.mean(counts) - 2.5) < 0.75


def test_archive_reconstructs_test3(panel):
    assets, bench = panel
    plan = small_plan(assets[0], bench, model="gaussian", n_windows=1, seed=9, asset_id="x")
    arc = run_backtest(plan)
    w = arc.windows[0]
    days = arc.window_days(w)
    models = [distribution_from_params(d.model.kind, d.model.params()) for d in days]
    thr = np.array([[d.forecasts[m.key].threshold_return for d in days] for m in arc.measures])
    rng = np.random.default_rng(_unit_seed(plan.seed, plan.asset_id, plan.model, w.window_id))
    counts = simulate_violation_counts(models, thr, plan.n_sims, rng)
    for i, m in enumerate(arc.measures):
        want = next(r for r in w.reports[m.key] if r.test_id == "test3")
        got = test3_from_counts(w.hit_sequences[m.key], counts[i], plan.alpha)
        assert got.p_value == want.p_value and got.statistic == want.statistic


def test_window_recalibration_matches_first_day(panel):
    assets, bench = panel
    kw = dict(model="gaussian", n_windows=1, tests=("test1",))
    daily = run_backtest(small_plan(assets[0], bench, **kw))
    fixed = run_backtest(small_plan(assets[0], bench, recalibrate="window", **kw))
    assert fixed.days[0].forecasts == daily.days[0].forecasts
    assert any(a.forecasts != b.forecasts for a, b in zip(fixed.days, daily.days))


def _archive(model, verdicts):
    windows = []
    for wid, v in enumerate(verdicts):
        h = HitSequence(np.array([1, 0, 0]), np.full(3, 0.1))
        rep = TestReport("test1", 1.0, 0.5, 0.1, v, 1)
        windows.append(WindowResult(wid, 0, 3, True, {"var": h}, {"var": [rep]}))
    return RunArchive("a", model, 0.01, [Measure("var")], [], windows)


def test_aggregate_rates():
    t = aggregate([_archive("gaussian", ["accept"])])
    assert t.rows[("gaussian", "var", 0)].acceptance["test1"] == 1.0
    t = aggregate([_archive("gaussian", ["accept"]), _archive("gaussian", ["reject"])])
    row = t.rows[("gaussian", "var", 0)]
    assert row.acceptance["test1"] == 0.5 and row.avg_violations == 1.0 and row.n == 2
    assert t.overall("gaussian", "var", "test1") == 0.5
    with pytest.raises(ValueError):
        aggregate([])


def test_generators():
    a = gen_synthetic("iid_gaussian", {"sigma": 0.01}, 500, 3)
    b = gen_synthetic("iid_gaussian", {"sigma": 0.01}, 500, 3)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.dates == business_dates(500)
    x = gen_synthetic("garch_t", None, 10_000, 4).values
    z = (x - x.mean()) / x.std()
    assert np.mean(z**4) > 3
    higher = [np.var(r.values[1000:]) > np.var(r.values[:1000])
              for r in (gen_synthetic("regime_shift", None, 2000, s) for s in range(20))]
    assert all(higher)
    with pytest.raises(DataError):
        gen_synthetic("nope", None, 10, 0)
    with pytest.raises(DataError):
        gen_synthetic("iid_gaussian", {"sigma": -1}, 10, 0)
    with pytest.raises(DataError):
        gen_synthetic("iid_gaussian", {"typo": 1}, 10, 0)


def test_parallel_matches_serial(panel):
    assets, bench = panel
    kw = dict(horizon=100, n_windows=2, n_sims=1000, seed=3)
    serial = run_protocol(assets, bench, ("historical", "gaussian"), n_jobs=1, **kw)
    parallel = run_protocol(assets, bench, ("historical", "gaussian"), n_jobs=2, **kw)
    ta, tb = aggregate(serial), aggregate(parallel)
    assert ta.rows == tb.rows


def test_size_under_correct_model():
    # 12 assets, correct Gaussian model, Test 1 acceptance at alpha = 0.10
    assets, bench = synthetic_panel("iid_gaussian", 12, 3, 500, 17)
    arcs = run_protocol(assets, bench, ("gaussian",), n_jobs=1, horizon=250, n_windows=1,
                        tests=("test1",), lambda_config=LambdaConfig(0.01, 0.01))
    assert aggregate(arcs).overall("gaussian", "var", "test1") >= 0.75


def test_nesting_counterexample_is_logged(panel, caplog, monkeypatch):
    def forced(fn, verdict):
        def wrapped(*args, **kwargs):
            rep = fn(*args, **kwargs)
            rep.verdict = verdict
            return rep
        return wrapped
    monkeypatch.setattr(eng, "test1_coverage", forced(eng.test1_coverage, ACCEPT))
    monkeypatch.setattr(eng, "kupiec_pof", forced(eng.kupiec_pof, REJECT))
    assets, bench = panel
    run_backtest(small_plan(assets[0], bench, model="gaussian", n_windows=1,
                            tests=("test1", "kupiec_lambda")))
    assert "nesting counterexample" in caplog.text
