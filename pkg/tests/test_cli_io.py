import json

import numpy as np
import pytest

from lambdavar.cli_io import (RunConfig, emit_report, load_config, parse_direction,
                              parse_returns_csv, read_report, iter_reports,
                              render_table, write_returns_csv)
from lambdavar.engine import aggregate, run_backtest, BacktestPlan, synthetic_panel
from lambdavar.errors import DataError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_three_rows_two_assets(tmp_path):
    p = write(tmp_path, "r.csv", "date,a,b\n2020-01-02,0.01,0.02\n2020-01-03,-0.01,0\n"
                                 "2020-01-06,0.005,0.001\n")
    s = parse_returns_csv(p)
    assert [x.name for x in s] == ["a", "b"] and all(len(x) == 3 for x in s)


def test_prices_mode(tmp_path):
    p = write(tmp_path, "p.csv", "date,a\n2020-01-02,100\n2020-01-03,101\n")
    (s,) = parse_returns_csv(p, "prices")
    assert s.values.tolist() == pytest.approx([0.01], abs=1e-15)


@pytest.mark.parametrize("text", ["date,a\n", "date,a\n2020-01-02,0.1\n",
                                  "date,a\n2020-13-02,0.1\n2020-01-03,0.1\n",
                                  "date,a\n2020-01-02,x\n2020-01-03,0.1\n", ""])
def test_bad_files(tmp_path, text):
    with pytest.raises(DataError):
        parse_returns_csv(write(tmp_path, "bad.csv", text))


def test_missing_cells_dropped(tmp_path, caplog):
    p = write(tmp_path, "m.csv", "date,a,b\n2020-01-02,0.01,\n2020-01-03,0.01,0.02\n"
                                 "2020-01-06,0.02,0.03\n")
    s = parse_returns_csv(p)
    assert len(s[0]) == 2 and "dropped 1" in caplog.text


def test_csv_round_trip(tmp_path):
    assets, _ = synthetic_panel("iid_gaussian", 2, 1, 30, 1)
    back = parse_returns_csv(write_returns_csv(tmp_path / "x.csv", assets))
    for a, b in zip(assets, back):
        np.testing.assert_array_equal(a.values, b.values)
        assert a.dates == b.dates and a.name == b.name


def test_config_parsing(tmp_path):
    p = write(tmp_path, "c.cfg", "# comment\ndata.asset = a.csv\nmodel = gaussian, historical\n"
                                 "lambda.min = 0.001\nlambda.direction = incr\n"
                                 "lambda.benchmark_var_level = 0.05\ntest.m_sims = 2000\n")
    cfg = load_config(p)
    assert cfg.asset_path == str(tmp_path / "a.csv")
    assert cfg.models == ("gaussian", "historical")
    assert cfg.lambda_min == 0.001 and cfg.directions == ("increasing",)
    assert cfg.benchmark_var_levels == (0.05,) and cfg.n_sims == 2000


@pytest.mark.parametrize("text", ["nokey\n", "lambda.typo = 1\n", "test.alpha = 1.5\n",
                                  "test.m_sims = 50\n", "window = abc\n"])
def test_bad_config(tmp_path, text):
    with pytest.raises(DataError):
        load_config(write(tmp_path, "c.cfg", text))


def test_parse_direction():
    assert parse_direction("both") == ("increasing", "decreasing")
    assert parse_direction("decr,incr") == ("decreasing", "increasing")
    with pytest.raises(ValueError):
        parse_direction("up")


def test_run_config_invariants():
    with pytest.raises(ValueError):
        RunConfig(alpha=0)
    RunConfig(n_sims=10, tests=("test1",))
    with pytest.raises(ValueError):
        RunConfig(n_sims=10)


@pytest.fixture(scope="module")
def archive():
    assets, bench = synthetic_panel("iid_gaussian", 1, 2, 350, 2)
    plan = BacktestPlan(assets[0], bench, "gaussian", horizon=100, n_windows=1,
                        tests=("test1", "test2"), directions=("increasing",),
                        benchmark_var_levels=(0.01,), asset_id="asset00")
    return [run_backtest(plan)]


def test_single_window_two_tests(tmp_path, archive):
    files = emit_report(aggregate(archive), archive, RunConfig(), tmp_path / "rep")
    doc = json.loads(files[0].read_text())
    assert doc["schema_version"] == 1
    (w,) = doc["windows"]
    assert len(w["measures"]["var"]["reports"]) == 2


def test_json_round_trip_exact(tmp_path, archive):
    emit_report(aggregate(archive), archive, RunConfig(), tmp_path / "rep")
    doc = read_report(tmp_path / "rep.json")
    key = lambda r: (r.metadata["measure"], r.test_id)
    original = [r for w in archive[0].windows for reps in w.reports.values() for r in reps]
    assert sorted(iter_reports(doc), key=key) == sorted(original, key=key)


def test_byte_identical(tmp_path, archive):
    table = aggregate(archive)
    a = emit_report(table, archive, RunConfig(format="csv"), tmp_path / "a")
    b = emit_report(table, archive, RunConfig(format="csv"), tmp_path / "b")
    assert len(a) == 3
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()


def test_empty_archive_list():
    with pytest.raises(ValueError):
        emit_report(None, [], RunConfig())


def test_table_rows_and_digits(archive):
    text = render_table(aggregate(archive))
    assert "VaR 1%" in text and "LVaR 1% (incr) (VaR 1%)" in text
    assert "[gaussian] acceptance test2" in text


def test_unwritable(tmp_path, archive):
    blocker = write(tmp_path, "file", "")
    with pytest.raises(DataError):
        emit_report(aggregate(archive), archive, RunConfig(), blocker / "sub" / "rep")
