"""CSV ingestion, run configuration and report emission."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from datetime import date
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .backtests import TEST_IDS, TestReport
from .distributions import MODEL_IDS, ReturnSeries
from .engine import AcceptanceTable, Measure, RunArchive
from .errors import DataError
from .lambda_calibration import DECREASING, INCREASING

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FORMATS = ("json", "csv", "table")


# --------------------------------------------------------------------------
# CSV input
# --------------------------------------------------------------------------

def parse_returns_csv(path, mode: str = "returns") -> list[ReturnSeries]:
    """Read a date column followed by one column per asset.

    In ``prices`` mode each column is converted to simple returns, so the
    series are one day shorter than the file.  Rows with an empty cell are
    dropped (and counted in a warning).
    """
    if mode not in ("returns", "prices"):
        raise ValueError("mode must be 'returns' or 'prices'")
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header, body = [c.strip() for c in rows[0]], rows[1:]
    if len(header) < 2:
        raise DataError(f"{path}: header needs a date column and at least one series")

    dates: list[date] = []
    values: list[list[float]] = []
    dropped = 0
    for lineno, row in enumerate(body, start=2):
        cells = [c.strip() for c in row]
        if len(cells) < len(header):
            cells += [""] * (len(header) - len(cells))
        if any(c == "" for c in cells[:len(header)]):
            dropped += 1
            continue
        try:
            d = date.fromisoformat(cells[0])
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed date {cells[0]!r}") from None
        try:
            nums = [float(c) for c in cells[1:len(header)]]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric cell") from None
        dates.append(d)
        values.append(nums)
    if dropped:
        log.warning("%s: dropped %d row(s) with missing cells", path, dropped)
    if len(values) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(values)}")

    arr = np.array(values)
    if mode == "prices":
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise DataError(f"{path}: prices must be positive and finite")
        arr = arr[1:] / arr[:-1] - 1.0
        dates = dates[1:]
    return [ReturnSeries(dates, arr[:, j], header[j + 1]) for j in range(arr.shape[1])]


def write_returns_csv(path, series: Sequence[ReturnSeries]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date"] + [s.name for s in series])
        for i, d in enumerate(series[0].dates):
            w.writerow([d.isoformat()] + [repr(float(s.values[i])) for s in series])
    return path


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    asset_path: str | None = None
    benchmark_path: str | None = None
    input_mode: str = "returns"
    models: tuple[str, ...] = MODEL_IDS
    window: int | None = None
    horizon: int = 250
    n_windows: int | None = None
    lambda_min: float = 0.005
    lambda_max: float = 0.01
    equipartition: str = "quarters"
    directions: tuple[str, ...] = (INCREASING, DECREASING)
    benchmark_var_levels: tuple[float, ...] = (0.05, 0.01)
    calibration_window: int = 250
    recalibrate: str = "daily"
    tests: tuple[str, ...] = TEST_IDS
    alpha: float = 0.10
    n_sims: int = 10_000
    seed: int = 0
    n_jobs: int | None = None
    output: str = "report"
    format: str = "table"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if "test3" in self.tests and self.n_sims < 1000:
            raise ValueError("m_sims must be at least 1000 when test3 is enabled")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        if self.input_mode not in ("returns", "prices"):
            raise ValueError("input mode must be 'returns' or 'prices'")
        for m in self.models:
            if m not in MODEL_IDS:
                raise ValueError(f"unknown model {m!r}")
        for d in self.directions:
            if d not in (INCREASING, DECREASING):
                raise ValueError(f"unknown direction {d!r}")
        for t in self.tests:
            if t not in TEST_IDS:
                raise ValueError(f"unknown test {t!r}")

    def with_overrides(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def plan_kwargs(self) -> dict[str, Any]:
        from .lambda_calibration import LambdaConfig
        return {
            "window": self.window, "horizon": self.horizon, "n_windows": self.n_windows,
            "lambda_config": LambdaConfig(self.lambda_min, self.lambda_max,
                                          equipartition=self.equipartition),
            "directions": self.directions, "benchmark_var_levels": self.benchmark_var_levels,
            "calibration_window": self.calibration_window, "recalibrate": self.recalibrate,
            "tests": self.tests, "alpha": self.alpha, "n_sims": self.n_sims, "seed": self.seed,
        }

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _split(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def parse_direction(value: str) -> tuple[str, ...]:
    aliases = {"incr": (INCREASING,), INCREASING: (INCREASING,), "decr": (DECREASING,),
               DECREASING: (DECREASING,), "both": (INCREASING, DECREASING)}
    out: list[str] = []
    for v in _split(value):
        if v not in aliases:
            raise ValueError(f"unknown direction {v!r}")
        out.extend(d for d in aliases[v] if d not in out)
    return tuple(out)


# config key -> (RunConfig field, converter)
CONFIG_KEYS = {
    "data.asset": ("asset_path", str),
    "data.benchmark": ("benchmark_path", str),
    "data.mode": ("input_mode", str),
    "model": ("models", _split),
    "window": ("window", int),
    "horizon": ("horizon", int),
    "windows": ("n_windows", int),
    "lambda.min": ("lambda_min", float),
    "lambda.max": ("lambda_max", float),
    "lambda.equipartition": ("equipartition", str),
    "lambda.direction": ("directions", parse_direction),
    "lambda.benchmark_var_level": ("benchmark_var_levels",
                                   lambda v: tuple(float(x) for x in _split(v))),
    "lambda.window": ("calibration_window", int),
    "lambda.recalibrate": ("recalibrate", str),
    "test.list": ("tests", _split),
    "test.alpha": ("alpha", float),
    "test.m_sims": ("n_sims", int),
    "seed": ("seed", int),
    "jobs": ("n_jobs", int),
    "output.path": ("output", str),
    "output.format": ("format", str),
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise DataError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for key, raw in parse_config_text(text, str(path)).items():
        name, conv = CONFIG_KEYS[key]
        try:
            values[name] = conv(raw)
        except ValueError as exc:
            raise DataError(f"{path}: bad value for {key}: {exc}") from None
    # relative data paths are resolved against the config file
    for name in ("asset_path", "benchmark_path"):
        if name in values and not Path(values[name]).is_absolute():
            values[name] = str(path.parent / values[name])
    try:
        return replace(base or RunConfig(), **values)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
    if isinstance(obj, date):
        return obj.isoformat()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_document(table: AcceptanceTable, archives: Sequence[RunArchive],
                    cfg: RunConfig | None = None) -> dict[str, Any]:
    windows = []
    for arc in archives:
        for w in arc.windows:
            days = arc.window_days(w)
            entry = {
                "asset": arc.asset_id, "model": arc.model, "window": w.window_id,
                "start": days[0].date.isoformat() if days and days[0].date else None,
                "end": days[-1].date.isoformat() if days and days[-1].date else None,
                "valid": w.valid, "reason": w.reason, "measures": {},
            }
            for key, seq in w.hit_sequences.items():
                entry["measures"][key] = {
                    "T": len(seq), "n_violations": seq.n_violations,
                    "expected_violations": float(seq.coverage.sum()),
                    "reports": [r.to_dict() for r in w.reports.get(key, [])],
                }
            windows.append(entry)
    rows = [{"model": m, "measure": k, "window": wid, "n": row.n,
             "avg_violations": row.avg_violations, "acceptance": row.acceptance}
            for (m, k, wid), row in table.rows.items()]
    return {"schema_version": SCHEMA_VERSION,
            "config": cfg.to_dict() if cfg else {},
            "windows": windows, "acceptance": rows}


def _fmt(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4g}"


def render_table(table: AcceptanceTable) -> str:
    """Aligned text with one block per model: violations then acceptance per test."""
    wids = table.window_ids
    keys = table.measure_keys
    tests = sorted({t for row in table.rows.values() for t in row.acceptance},
                   key=lambda t: TEST_IDS.index(t))
    labels = {k: Measure.from_key(k).label(table.lambda_max) for k in keys}
    lw = max(len(s) for s in labels.values()) + 2
    head = " " * lw + "".join(f"{'w' + str(w):>9}" for w in wids)
    lines: list[str] = []
    for model in table.models:
        for title, getter in [("average violations", lambda r: r.avg_violations)] + [
                (f"acceptance {t}", lambda r, t=t: r.acceptance.get(t)) for t in tests]:
            block = []
            for k in keys:
                cells = []
                for w in wids:
                    row = table.rows.get((model, k, w))
                    val = getter(row) if row else None
                    cells.append(f"{'-' if val is None else _fmt(val):>9}")
                if any(c.strip() != "-" for c in cells):
                    block.append(f"{labels[k]:<{lw}}" + "".join(cells))
            if block:
                lines += [f"[{model}] {title}", head, *block, ""]
    return "\n".join(lines)


def render_csv(table: AcceptanceTable) -> str:
    tests = sorted({t for row in table.rows.values() for t in row.acceptance},
                   key=lambda t: TEST_IDS.index(t))
    out = ["model,measure,window,n,avg_violations," + ",".join(f"accept_{t}" for t in tests)]
    for (m, k, wid), row in table.rows.items():
        acc = [_fmt(row.acceptance[t]) if t in row.acceptance else "" for t in tests]
        out.append(",".join([m, k, str(wid), str(row.n), _fmt(row.avg_violations)] + acc))
    return "\n".join(out) + "\n"


def emit_report(table: AcceptanceTable, archives: Sequence[RunArchive],
                cfg: RunConfig | None = None, output=None) -> list[Path]:
    """Write ``<output>.json`` and ``<output>.txt`` (plus ``.csv`` for csv format)."""
    if not archives:
        raise ValueError("no archives to report")
    stem = Path(output if output is not None else (cfg.output if cfg else "report"))
    if stem.suffix in (".json", ".txt", ".csv"):
        stem = stem.with_suffix("")
    doc = report_document(table, archives, cfg)
    files = {
        stem.with_suffix(".json"): json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n",
        stem.with_suffix(".txt"): render_table(table),
    }
    if cfg is not None and cfg.format == "csv":
        files[stem.with_suffix(".csv")] = render_csv(table)
    written = []
    try:
        stem.parent.mkdir(parents=True, exist_ok=True)
        for p, text in files.items():
            p.write_text(text, encoding="utf-8")
            written.append(p)
    except OSError as exc:
        raise DataError(f"cannot write report to {stem}: {exc}") from exc
    return written


def read_report(path) -> dict[str, Any]:
    """Load a JSON report, turning every report entry back into a TestReport."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported report schema {doc.get('schema_version')!r}")
    for w in doc["windows"]:
        for m in w["measures"].values():
            m["reports"] = [TestReport.from_dict(r) for r in m["reports"]]
    return doc


def iter_reports(doc: Mapping[str, Any]) -> Iterable[TestReport]:
    for w in doc["windows"]:
        for m in w["measures"].values():
            yield from m["reports"]

