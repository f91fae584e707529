"""Series ingestion, run configuration, and the train/fit then test/predict
workflow over one or many basins.

A series file is CSV with header ``date,obs,sim``: ISO calendar dates,
observed and simulated values in the forecast variable's units.  Rows with
missing or non-finite values are dropped and counted.  The regression is
cross-sectional, so date gaps are harmless; dates only carve out the train
and test windows.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import (
    BatchError,
    EmptySeriesError,
    InvalidInputError,
    SeriesFormatError,
    TailQRError,
)
from .evaluate import EvaluationReport, evaluate_predictions
from .evt import DEFAULT_NU, TailConfig, hill_estimates
from .model import (
    DEFAULT_TARGET_LEVELS,
    METHOD_CONVENTIONAL,
    METHOD_EXTREMAL,
    ExtremalQRModel,
    PredictionTable,
    build_prediction_table,
    fit_extremal,
)
from .qr import Dataset, check_quantile_level

SERIES_HEADER = ("date", "obs", "sim")
PREDICTIONS_HEADER = ("date", "method", "level", "value")


@dataclass(frozen=True)
class SeriesPair:
    """Aligned observed and simulated series for one basin."""

    basin_id: str
    dates: tuple[date, ...]
    obs: np.ndarray
    sim: np.ndarray
    dropped_rows: int = 0

    def __post_init__(self):
        obs = np.asarray(self.obs, dtype=float)
        sim = np.asarray(self.sim, dtype=float)
        if obs.shape[0] != len(self.dates) or sim.shape[0] != len(self.dates):
            raise InvalidInputError("dates, obs and sim must have equal length")
        obs.setflags(write=False)
        sim.setflags(write=False)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "sim", sim)
        object.__setattr__(self, "dates", tuple(self.dates))

    def __len__(self) -> int:
        return len(self.dates)


def _parse_value(token: str, column: str, line_no: int) -> float | None:
    """A value cell: empty means missing, non-finite counts as missing,
    anything unparseable is a format error."""
    token = token.strip()
    if token == "":
        return None
    try:
        value = float(token)
    except ValueError:
        raise SeriesFormatError(
            f"line {line_no}: cannot parse {column} value {token!r}", line=line_no
        ) from None
    if not math.isfinite(value):
        return None
    return value


def load_series(path, basin_id: str | None = None) -> SeriesPair:
    """Read a ``date,obs,sim`` CSV into a SeriesPair.

    Dates must be ISO-8601, strictly increasing, without duplicates;
    violations raise with the line number and the offending date.
    Negative observations are rejected (corrupt streamflow), simulated
    values may be any finite number.
    """
    path = Path(path)
    if basin_id is None:
        basin_id = path.stem
    dates: list[date] = []
    obs: list[float] = []
    sim: list[float] = []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SeriesFormatError("line 1: empty file", line=1) from None
        if tuple(h.strip().lower() for h in header) != SERIES_HEADER:
            raise SeriesFormatError(
                f"line 1: expected header {','.join(SERIES_HEADER)!r}, "
                f"got {','.join(header)!r}",
                line=1,
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != 3:
                raise SeriesFormatError(
                    f"line {line_no}: expected 3 columns, got {len(row)}",
                    line=line_no,
                )
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise SeriesFormatError(
                    f"line {line_no}: malformed date {row[0]!r}", line=line_no
                ) from None
            if dates and day == dates[-1]:
                raise SeriesFormatError(
                    f"line {line_no}: duplicate date {day.isoformat()}", line=line_no
                )
            if dates and day < dates[-1]:
                raise SeriesFormatError(
                    f"line {line_no}: date {day.isoformat()} is out of order",
                    line=line_no,
                )
            o = _parse_value(row[1], "obs", line_no)
            s = _parse_value(row[2], "sim", line_no)
            if o is None or s is None:
                dropped += 1
                continue
            if o < 0.0:
                raise SeriesFormatError(
                    f"line {line_no}: negative observation {o}", line=line_no
                )
            dates.append(day)
            obs.append(o)
            sim.append(s)
    if not dates:
        raise EmptySeriesError(f"{path}: no usable rows after dropping {dropped}")
    return SeriesPair(
        basin_id=basin_id,
        dates=tuple(dates),
        obs=np.array(obs),
        sim=np.array(sim),
        dropped_rows=dropped,
    )


@dataclass(frozen=True)
class DateRange:
    """Closed calendar interval."""

    start: date
    end: date

    def __post_init__(self):
        if self.start > self.end:
            raise InvalidInputError(
                f"range start {self.start} is after end {self.end}"
            )

    @classmethod
    def parse(cls, text: str) -> "DateRange":
        """Parse ``START:END`` with ISO dates."""
        parts = text.split(":")
        if len(parts) != 2:
            raise InvalidInputError(
                f"expected START:END date range, got {text!r}"
            )
        try:
            return cls(date.fromisoformat(parts[0]), date.fromisoformat(parts[1]))
        except ValueError as exc:
            raise InvalidInputError(f"malformed date range {text!r}: {exc}") from None

    def contains(self, day: date) -> bool:
        return self.start <= day <= self.end

    def __str__(self) -> str:
        return f"{self.start.isoformat()}:{self.end.isoformat()}"


@dataclass(frozen=True)
class RunConfig:
    """Everything a post-processing run needs besides the series itself."""

    train: DateRange
    test: DateRange
    levels: tuple[float, ...] = DEFAULT_TARGET_LEVELS
    nu: float = DEFAULT_NU
    k: int | None = None
    seed: int = 0
    methods: tuple[str, ...] = (METHOD_CONVENTIONAL, METHOD_EXTREMAL)

    def __post_init__(self):
        object.__setattr__(
            self, "levels", tuple(sorted(check_quantile_level(t) for t in self.levels))
        )
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.train.end >= self.test.start:
            raise InvalidInputError(
                f"training range {self.train} must precede the test range {self.test}"
            )
        for method in self.methods:
            if method not in (METHOD_CONVENTIONAL, METHOD_EXTREMAL):
                raise InvalidInputError(f"unknown method {method!r}")
        if not self.methods:
            raise InvalidInputError("need at least one method")
        k = self.k
        if isinstance(k, str):
            k = None if k.lower() == "auto" else int(k)
        object.__setattr__(self, "k", None if k is None else int(k))

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        """Build from a config-file dictionary (the JSON mirror)."""
        try:
            train = DateRange.parse(doc["train"]) if isinstance(doc["train"], str) \
                else DateRange(date.fromisoformat(doc["train"][0]), date.fromisoformat(doc["train"][1]))
            test = DateRange.parse(doc["test"]) if isinstance(doc["test"], str) \
                else DateRange(date.fromisoformat(doc["test"][0]), date.fromisoformat(doc["test"][1]))
        except KeyError as exc:
            raise InvalidInputError(f"config is missing {exc.args[0]!r}") from None
        kwargs = {}
        if "levels" in doc:
            kwargs["levels"] = tuple(doc["levels"])
        if "nu" in doc:
            kwargs["nu"] = float(doc["nu"])
        if "k" in doc:
            kwargs["k"] = None if doc["k"] in (None, "auto") else int(doc["k"])
        if "seed" in doc:
            kwargs["seed"] = int(doc["seed"])
        if "methods" in doc:
            kwargs["methods"] = tuple(doc["methods"])
        return cls(train=train, test=test, **kwargs)

    def to_dict(self) -> dict:
        return {
            "train": str(self.train),
            "test": str(self.test),
            "levels": list(self.levels),
            "nu": self.nu,
            "k": "auto" if self.k is None else self.k,
            "seed": self.seed,
            "methods": list(self.methods),
        }


def slice_series(series: SeriesPair, window: DateRange):
    """Rows of the series falling inside the window."""
    mask = np.array([window.contains(d) for d in series.dates], dtype=bool)
    dates = tuple(d for d, keep in zip(series.dates, mask) if keep)
    return dates, series.obs[mask], series.sim[mask]


@dataclass
class RunResult:
    """Everything one basin's run produces."""

    basin_id: str
    model: ExtremalQRModel
    table: PredictionTable
    report: EvaluationReport
    n_train: int
    n_test: int
    dropped_rows: int


def _annotate(exc: TailQRError, basin_id: str):
    exc.basin_id = basin_id
    if exc.args:
        exc.args = (f"basin {basin_id}: {exc.args[0]}",) + exc.args[1:]
    return exc


def run_postprocess(series: SeriesPair, cfg: RunConfig) -> RunResult:
    """Fit on the train window, predict and evaluate on the test window.

    The response is obs, the single covariate is sim.  Emits one
    prediction series per (method, level) pair.
    """
    try:
        _, train_obs, train_sim = slice_series(series, cfg.train)
        test_dates, test_obs, test_sim = slice_series(series, cfg.test)
        if train_obs.shape[0] == 0:
            raise EmptySeriesError(f"no rows in training range {cfg.train}")
        if test_obs.shape[0] == 0:
            raise EmptySeriesError(f"no rows in test range {cfg.test}")
        train = Dataset(train_sim[:, None], train_obs)
        tail_cfg = None
        if cfg.k is not None:
            tail_cfg = TailConfig(n=train.n, k=int(cfg.k), nu=cfg.nu)
        model = fit_extremal(train, cfg=tail_cfg, target_levels=cfg.levels, nu=cfg.nu)
        table = build_prediction_table(
            model, test_sim[:, None], index=test_dates, methods=cfg.methods
        )
        estimates = hill_estimates(list(model.fits), train.design, model.cfg)
        gammas = [e.gamma for e in estimates if not e.excluded]
        report = evaluate_predictions(test_obs, table, gammas=gammas)
        return RunResult(
            basin_id=series.basin_id,
            model=model,
            table=table,
            report=report,
            n_train=train.n,
            n_test=test_obs.shape[0],
            dropped_rows=series.dropped_rows,
        )
    except TailQRError as exc:
        raise _annotate(exc, series.basin_id)


@dataclass
class BatchResult:
    """Per-basin outcomes plus deterministic cross-basin aggregates."""

    results: dict[str, RunResult] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _batch_summary(results: dict[str, RunResult]) -> dict:
    """Cross-basin aggregates, stable under basin processing order.

    Log ratios are averaged over time within each basin first, then
    summarised across basins.
    """
    basins = sorted(results)
    gamma_pools = [results[b].model.gamma_pool for b in basins]
    summary: dict = {
        "n_basins": len(basins),
        "basins": basins,
        "evi_pooled": {
            "median": float(np.median(gamma_pools)),
            "q1": float(np.percentile(gamma_pools, 25)),
            "q3": float(np.percentile(gamma_pools, 75)),
        },
        "log_ratio": {},
        "exceedance_rate_mean": {},
    }
    levels = results[basins[0]].table.levels if basins else ()
    for level in levels:
        means = [
            results[b].report.log_ratio[level].mean
            for b in basins
            if level in results[b].report.log_ratio
        ]
        if means:
            summary["log_ratio"][repr(level)] = {
                "mean_of_basin_means": float(np.mean(means)),
                "median_of_basin_means": float(np.median(means)),
                "n_basins": len(means),
            }
    methods = results[basins[0]].table.methods if basins else ()
    for method in methods:
        summary["exceedance_rate_mean"][method] = {}
        for level in levels:
            rates = [
                results[b].report.exceedance[(method, level)][1] for b in basins
            ]
            summary["exceedance_rate_mean"][method][repr(level)] = float(
                np.mean(rates)
            )
    return summary


def run_batch(manifest, cfg: RunConfig, workers: int | None = None) -> BatchResult:
    """Run every (path, basin_id) entry, isolating per-basin failures.

    Basins run concurrently; results are keyed and aggregated by basin_id,
    so the outcome does not depend on completion order.  Raises only when
    every basin fails.
    """
    entries = [(Path(p), str(b)) for p, b in manifest]
    if not entries:
        raise InvalidInputError("empty manifest")
    seen = set()
    for _, basin_id in entries:
        if basin_id in seen:
            raise InvalidInputError(f"duplicate basin_id {basin_id!r} in manifest")
        seen.add(basin_id)

    def job(entry):
        path, basin_id = entry
        series = load_series(path, basin_id=basin_id)
        return run_postprocess(series, cfg)

    out = BatchResult()
    max_workers = workers or min(8, len(entries))
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {basin_id: pool.submit(job, (path, basin_id))
                   for path, basin_id in entries}
    for basin_id in sorted(futures):
        try:
            out.results[basin_id] = futures[basin_id].result()
        except (TailQRError, OSError) as exc:
            out.failures[basin_id] = f"{type(exc).__name__}: {exc}"
    if not out.results:
        raise BatchError(
            f"all {len(entries)} basins failed", failures=out.failures
        )
    out.summary = _batch_summary(out.results)
    out.summary["n_failed"] = len(out.failures)
    out.summary["failed_basins"] = sorted(out.failures)
    return out


def write_predictions_csv(path, table: PredictionTable) -> None:
    """Emit ``date,method,level,value`` rows, one per index/method/level."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(PREDICTIONS_HEADER)
        for method in table.methods:
            for level in table.levels:
                series = table.series(method, level)
                for idx, value in zip(table.index, series):
                    day = idx.isoformat() if isinstance(idx, date) else idx
                    writer.writerow([day, method, repr(level), repr(float(value))])


def read_predictions_csv(path) -> dict[tuple[str, float], dict]:
    """Read a predictions CSV back into {(method, level): {date: value}}."""
    out: dict[tuple[str, float], dict] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip().lower() for h in header) != PREDICTIONS_HEADER:
            raise SeriesFormatError(
                f"{path}: expected header {','.join(PREDICTIONS_HEADER)!r}", line=1
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise SeriesFormatError(
                    f"line {line_no}: expected 4 columns", line=line_no
                )
            try:
                key = (row[1], float(row[2]))
                out.setdefault(key, {})[row[0]] = float(row[3])
            except ValueError:
                raise SeriesFormatError(
                    f"line {line_no}: cannot parse row {row!r}", line=line_no
                ) from None
    return out


def synthetic_series(spec, start: date = date(2010, 1, 1), basin_id: str = "synthetic") -> SeriesPair:
    """Wrap a synthetic draw as a daily series: obs = y, sim = x."""
    from .synth import generate

    sample = generate(spec)
    dates = tuple(start + timedelta(days=i) for i in range(spec.n))
    return SeriesPair(
        basin_id=basin_id,
        dates=dates,
        obs=sample.dataset.response,
        sim=sample.x,
        dropped_rows=0,
    )


def write_series_csv(path, series: SeriesPair) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SERIES_HEADER)
        for day, o, s in zip(series.dates, series.obs, series.sim):
            writer.writerow([day.isoformat(), repr(float(o)), repr(float(s))])
