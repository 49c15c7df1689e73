import io
import json

import pytest

from lambdavar.cli import main


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["synth", "--n-assets", "2", "--n-benchmarks", "2", "--length", "600",
                 "--seed", "1", "--output", str(d)], out=io.StringIO()) == 0
    return d


def run(argv):
    out = io.StringIO()
    return main(argv, out=out), out.getvalue()


def test_backtest_with_config(data, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"data.asset = {data / 'assets.csv'}\ndata.benchmark = {data / 'benchmarks.csv'}\n"
                   f"model = gaussian\nhorizon = 100\nwindows = 2\ntest.m_sims = 1000\n"
                   f"output.path = {tmp_path / 'rep'}\noutput.format = json\n")
    code, out = run(["backtest", "--config", str(cfg)])
    assert code == 0
    assert (tmp_path / "rep.json").exists() and (tmp_path / "rep.txt").exists()
    assert json.loads(out)["rows"] > 0


def test_flags_override_config(data, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"data.asset = {data / 'assets.csv'}\ndata.benchmark = {data / 'benchmarks.csv'}\n"
                   "model = historical\nhorizon = 100\nwindows = 1\ntest.alpha = 0.05\n"
                   "test.m_sims = 1000\nseed = 1\nlambda.min = 0.001\nlambda.max = 0.02\n"
                   "lambda.direction = decr\nlambda.benchmark_var_level = 0.05\n"
                   f"output.path = {tmp_path / 'cfg'}\noutput.format = table\n")
    code, _ = run(["backtest", "--config", str(cfg), "--model", "gaussian", "--alpha", "0.2",
                   "--m-sims", "1500", "--seed", "7", "--lambda-min", "0.004",
                   "--lambda-max", "0.01", "--direction", "incr", "--benchmark-var-level", "0.01",
                   "--output", str(tmp_path / "flag"), "--format", "csv"])
    assert code == 0
    assert not (tmp_path / "cfg.json").exists()
    doc = json.loads((tmp_path / "flag.json").read_text())
    c = doc["config"]
    assert c["models"] == ["gaussian"] and c["alpha"] == 0.2 and c["n_sims"] == 1500
    assert c["seed"] == 7 and c["lambda_min"] == 0.004 and c["lambda_max"] == 0.01
    assert c["directions"] == ["increasing"] and c["benchmark_var_levels"] == [0.01]
    assert c["format"] == "csv" and (tmp_path / "flag.csv").exists()
    assert {w["model"] for w in doc["windows"]} == {"gaussian"}


def test_unknown_flag_is_usage_error(capsys):
    assert main(["backtest", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand():
    assert main([]) == 1


def test_data_error_exit(tmp_path):
    code, _ = run(["calibrate", "--benchmark", str(tmp_path / "none.csv"), "--date", "2020-01-01"])
    assert code == 2


def test_bad_value_exit(data):
    code, _ = run(["backtest", "--asset", str(data / "assets.csv"), "--benchmark",
                   str(data / "benchmarks.csv"), "--alpha", "2"])
    assert code == 1


def test_numerical_failure_exit(data, monkeypatch):
    from lambdavar import cli
    from lambdavar.errors import FitError

    def boom(*a, **k):
        raise FitError("optimizer diverged")
    monkeypatch.setattr(cli, "run_protocol", boom)
    code, _ = run(["backtest", "--asset", str(data / "assets.csv"), "--benchmark",
                   str(data / "benchmarks.csv")])
    assert code == 3


def test_calibrate_prints_breakpoints(data):
    code, out = run(["calibrate", "--benchmark", str(data / "benchmarks.csv"),
                     "--date", "2006-03-01", "--direction", "both"])
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 5 and lines[1].startswith("increasing")


def test_measure_series(data, tmp_path):
    code, _ = run(["measure", "--asset", str(data / "assets.csv"), "--benchmark",
                   str(data / "benchmarks.csv"), "--model", "historical", "--direction", "incr",
                   "--benchmark-var-level", "0.01", "--output", str(tmp_path / "m.csv")])
    assert code == 0
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0].split(",") == ["date", "asset", "model", "realized", "var",
                                  "lvar_incr_b0.01", "coverage_incr_b0.01"]
    # 600 - 250 historical days plus one out-of-sample forecast, for 2 assets
    assert len(rows) == 1 + 2 * 351
    assert all(float(r.split(",")[5]) >= float(r.split(",")[4]) for r in rows[1:])


def test_selftest_passes():
    code, out = run(["selftest"])
    assert code == 0
    assert out.count("PASS") == 5 and "FAIL" not in out


def test_selftest_reports_failure(monkeypatch):
    import lambdavar.selftest as st
    monkeypatch.setattr(st, "run_all", lambda quick=True: [("broken", False, "x")])
    code, out = run(["selftest"])
    assert code == 1 and "FAIL" in out


def test_synth_bad_param(tmp_path):
    code, _ = run(["synth", "--param", "sigma=abc", "--output", str(tmp_path)])
    assert code == 1
    code, _ = run(["synth", "--param", "typo=1", "--output", str(tmp_path)])
    assert code == 2
