"""Command-line entry point: ``lambdavar <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from datetime import date
from pathlib import Path

from . import __version__
from .cli_io import (FORMATS, RunConfig, emit_report, load_config, parse_direction,
                     parse_returns_csv, render_csv, render_table, report_document,
                     write_returns_csv)
from .distributions import FITTERS, MODEL_IDS
from .engine import (DEFAULT_WINDOW, GENERATORS, aggregate, run_protocol, synthetic_panel)
from .errors import DataError, FitError
from .lambda_calibration import BenchmarkPanel, LambdaConfig, calibrate_lambda
from .risk_measures import lambda_var, var

log = logging.getLogger("lambdavar")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--model", help=f"comma-separated subset of {','.join(MODEL_IDS)}")
    p.add_argument("--alpha", type=float, help="significance level (default 0.10)")
    p.add_argument("--m-sims", type=int, dest="m_sims", help="Test 3 simulations (default 10000)")
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda-min", type=float, dest="lambda_min")
    p.add_argument("--lambda-max", type=float, dest="lambda_max")
    p.add_argument("--direction", help="incr, decr or both")
    p.add_argument("--benchmark-var-level", dest="benchmark_var_level",
                   help="comma-separated benchmark VaR levels, e.g. 0.05,0.01")
    p.add_argument("--output", help="output path (file stem for reports)")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--asset", help="asset CSV (date column + one column per asset)")
    p.add_argument("--benchmark", help="benchmark CSV")
    p.add_argument("--prices", action="store_true", help="input CSVs hold prices, not returns")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lambdavar", description="Lambda-VaR computation and backtesting")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="print Lambda breakpoints for a date")
    _common(p)
    p.add_argument("--date", required=True, help="forecast date (ISO); uses the prior window")

    p = sub.add_parser("measure", help="daily VaR / Lambda-VaR series")
    _common(p)
    p.add_argument("--start", help="first forecast date (default: first feasible day)")

    p = sub.add_parser("backtest", help="full rolling backtest and reports")
    _common(p)
    p.add_argument("--jobs", type=int, help="worker processes")

    p = sub.add_parser("synth", help="write a synthetic asset and benchmark panel")
    p.add_argument("--generator", choices=GENERATORS, default="iid_gaussian")
    p.add_argument("--n-assets", type=int, default=12)
    p.add_argument("--n-benchmarks", type=int, default=3)
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter, repeatable (e.g. sigma=0.02)")
    p.add_argument("--output", default="synthetic", help="output directory")

    p = sub.add_parser("selftest", help="run the oracle-equivalence checks")
    p.add_argument("--full", action="store_true", help="use the full case counts")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < config file < command-line flags."""
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "asset_path": args.asset, "benchmark_path": args.benchmark,
        "models": tuple(m.strip() for m in args.model.split(",")) if args.model else None,
        "alpha": args.alpha, "n_sims": args.m_sims, "seed": args.seed,
        "lambda_min": args.lambda_min, "lambda_max": args.lambda_max,
        "directions": parse_direction(args.direction) if args.direction else None,
        "benchmark_var_levels": (tuple(float(v) for v in args.benchmark_var_level.split(","))
                                 if args.benchmark_var_level else None),
        "output": args.output, "format": args.format,
        "input_mode": "prices" if args.prices else None,
        "n_jobs": getattr(args, "jobs", None),
    }
    return cfg.with_overrides(**overrides)


def _load_inputs(cfg: RunConfig):
    if not cfg.benchmark_path:
        raise UsageError("a benchmark CSV is required (--benchmark or data.benchmark)")
    bench = BenchmarkPanel.from_series(parse_returns_csv(cfg.benchmark_path, cfg.input_mode))
    assets = parse_returns_csv(cfg.asset_path, cfg.input_mode) if cfg.asset_path else []
    for a in assets:
        if a.dates != bench.dates:
            raise DataError(f"asset {a.name!r} dates differ from the benchmark dates")
    return assets, bench


def _day_index(dates, when: str) -> int:
    try:
        d = date.fromisoformat(when)
    except ValueError:
        raise UsageError(f"malformed date {when!r}") from None
    for i, x in enumerate(dates):
        if x >= d:
            return i
    raise DataError(f"{when} is after the last date")


def cmd_calibrate(args, cfg: RunConfig, out) -> int:
    _, bench = _load_inputs(cfg)
    t = _day_index(bench.dates, args.date)
    lines = []
    for direction in cfg.directions:
        for level in cfg.benchmark_var_levels:
            lc = LambdaConfig(cfg.lambda_min, cfg.lambda_max, benchmark_var_level=level,
                              direction=direction, equipartition=cfg.equipartition)
            f = calibrate_lambda(bench, lc, t, cfg.calibration_window)
            pts = "  ".join(f"({x:.6g}, {lam:.4g})" for x, lam in f.breakpoints)
            flags = f" flags={sorted(f.flags)}" if f.flags else ""
            lines.append(f"{direction:<10} VaR {level:.0%}: {pts}{flags}\n")
    out.write(f"Lambda for {bench.dates[t]} (window ending {bench.dates[t - 1]})\n")
    out.writelines(lines)
    return EXIT_OK


def cmd_measure(args, cfg: RunConfig, out) -> int:
    assets, bench = _load_inputs(cfg)
    if not assets:
        raise UsageError("an asset CSV is required (--asset or data.asset)")
    rows = []
    for model in cfg.models:
        W = cfg.window or DEFAULT_WINDOW[model]
        start = max(W, cfg.calibration_window)
        if args.start:
            start = max(start, _day_index(bench.dates, args.start))
        lcs = [LambdaConfig(cfg.lambda_min, cfg.lambda_max, benchmark_var_level=b, direction=d,
                            equipartition=cfg.equipartition)
               for d in cfg.directions for b in cfg.benchmark_var_levels]
        for a in assets:
            for t in range(start, len(a) + 1):
                dist = FITTERS[model](a.values[t - W:t])
                row = {"date": bench.dates[t].isoformat() if t < len(a) else "next",
                       "asset": a.name, "model": model,
                       "realized": repr(float(a.values[t])) if t < len(a) else "",
                       "var": repr(var(dist, cfg.lambda_max).var_value)}
                for lc in lcs:
                    fc = lambda_var(dist, calibrate_lambda(bench, lc, t, cfg.calibration_window))
                    tag = "incr" if lc.direction == "increasing" else "decr"
                    row[f"lvar_{tag}_b{lc.benchmark_var_level:g}"] = repr(fc.var_value)
                    row[f"coverage_{tag}_b{lc.benchmark_var_level:g}"] = repr(fc.coverage_prob)
                rows.append(row)
    target = open(cfg.output, "w", newline="", encoding="utf-8") if args.output else out
    try:
        w = csv.DictWriter(target, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if target is not out:
            target.close()
    return EXIT_OK


def cmd_backtest(args, cfg: RunConfig, out) -> int:
    assets, bench = _load_inputs(cfg)
    if not assets:
        raise UsageError("an asset CSV is required (--asset or data.asset)")
    t0 = time.perf_counter()
    archives = run_protocol(assets, bench, cfg.models, n_jobs=cfg.n_jobs, **cfg.plan_kwargs())
    table = aggregate(archives)
    files = emit_report(table, archives, cfg)
    if cfg.format == "table":
        out.write(render_table(table))
    elif cfg.format == "csv":
        out.write(render_csv(table))
    else:
        import json
        out.write(json.dumps({"files": [str(f) for f in files],
                              "rows": len(report_document(table, archives)["acceptance"])}) + "\n")
    log.info("backtest finished in %.1fs; wrote %s", time.perf_counter() - t0,
             ", ".join(str(f) for f in files))
    return EXIT_OK


def cmd_synth(args, out) -> int:
    params = {}
    for item in args.param:
        key, _, value = item.partition("=")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise UsageError(f"bad --param {item!r}; expected KEY=NUMBER") from None
    assets, bench = synthetic_panel(args.generator, args.n_assets, args.n_benchmarks,
                                    args.length, args.seed, params)
    outdir = Path(args.output)
    a = write_returns_csv(outdir / "assets.csv", assets)
    from .distributions import ReturnSeries
    b = write_returns_csv(outdir / "benchmarks.csv",
                          [ReturnSeries(bench.dates, bench.values[:, j], n)
                           for j, n in enumerate(bench.names)])
    out.write(f"{a}\n{b}\n")
    return EXIT_OK


def cmd_selftest(args, out) -> int:
    from .selftest import run_all
    results = run_all(quick=not args.full)
    for name, ok, detail in results:
        out.write(f"{'PASS' if ok else 'FAIL'}  {name:<34} {detail}\n")
    return EXIT_OK if all(ok for _, ok, _ in results) else 1


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args, out)
        if args.command == "selftest":
            return cmd_selftest(args, out)
        cfg = resolve_config(args)
        handler = {"calibrate": cmd_calibrate, "measure": cmd_measure,
                   "backtest": cmd_backtest}[args.command]
        return handler(args, cfg, out)
    except UsageError as exc:
        sys.stderr.write(f"lambdavar: {exc}\n")
        return EXIT_USAGE
    except FitError as exc:
        sys.stderr.write(f"lambdavar: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except DataError as exc:
        sys.stderr.write(f"lambdavar: data error: {exc}\n")
        return EXIT_DATA
    except ValueError as exc:
        sys.stderr.write(f"lambdavar: invalid setting: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
