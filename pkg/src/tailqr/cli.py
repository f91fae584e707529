"""Command-line interface.

Subcommands: ``fit``, ``predict``, ``evaluate``, ``run``, ``batch``,
``synth``, ``compare``.  Configuration comes from an optional JSON file
(``--config``) mirroring RunConfig; explicit flags override file values.

Exit codes: 0 on success, 1 on any fatal error, 2 on command-line usage
errors (click's convention), 3 when a batch finished with some basins
failed but at least one succeeded.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path

import click

from .errors import InvalidInputError, SeriesFormatError, TailQRError
from .evaluate import EvaluationReport, log_quantile_ratio
from .model import (
    METHOD_CONVENTIONAL,
    METHOD_EXTREMAL,
    PredictionTable,
    build_prediction_table,
    deserialize_model,
    fit_extremal,
    serialize_model,
)
from .evt import TailConfig
from .pipeline import (
    DateRange,
    RunConfig,
    load_series,
    read_predictions_csv,
    run_batch,
    run_postprocess,
    slice_series,
    synthetic_series,
    write_predictions_csv,
    write_series_csv,
)
from .qr import Dataset
from .synth import SynthSpec, derive_seed

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL_FAILURE = 3


def _fatal_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except TailQRError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FATAL)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FATAL)

    return wrapper


def _config_options(func):
    options = [
        click.option("--config", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="JSON config file mirroring RunConfig."),
        click.option("--train", default=None, help="Training date range START:END."),
        click.option("--test", default=None, help="Test date range START:END."),
        click.option("--levels", default=None,
                     help="Comma-separated target quantile levels."),
        click.option("--nu", type=float, default=None,
                     help="Intermediate-grid exponent (default 0.1)."),
        click.option("--k", default=None,
                     help="Number of upper levels, or 'auto' (default)."),
        click.option("--seed", type=int, default=None, help="Seed for synthetic work."),
        click.option("--methods", default=None,
                     help="Comma-separated subset of conventional,extremal."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _build_config(config, train, test, levels, nu, k, seed, methods) -> RunConfig:
    doc: dict = {}
    if config is not None:
        doc = json.loads(Path(config).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise InvalidInputError(f"{config}: config must be a JSON object")
    if train is not None:
        doc["train"] = train
    if test is not None:
        doc["test"] = test
    if levels is not None:
        doc["levels"] = [float(t) for t in levels.split(",") if t.strip()]
    if nu is not None:
        doc["nu"] = nu
    if k is not None:
        doc["k"] = k
    if seed is not None:
        doc["seed"] = seed
    if methods is not None:
        doc["methods"] = [m.strip() for m in methods.split(",") if m.strip()]
    if "train" not in doc or "test" not in doc:
        raise InvalidInputError(
            "both --train and --test ranges are required (flags or config file)"
        )
    return RunConfig.from_dict(doc)


def _ensure_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report_files(outdir: Path, report: EvaluationReport) -> None:
    (outdir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=1), encoding="utf-8"
    )
    for name, rows in report.csv_tables().items():
        with open(outdir / f"{name}.csv", "w", newline="", encoding="utf-8") as handle:
            csv.writer(handle).writerows(rows)


def _write_run_outputs(outdir: Path, result, plots: bool) -> None:
    write_predictions_csv(outdir / "predictions.csv", result.table)
    (outdir / "model.json").write_bytes(serialize_model(result.model))
    _write_report_files(outdir, result.report)
    if plots:
        from . import plots as plotting

        if result.report.evi is not None:
            plotting.evi_histogram_svg(result.report.evi, outdir / "evi_histogram.svg")


@click.group()
def main():
    """Post-process deterministic forecasts into far-tail quantile
    predictions via quantile regression with heavy-tail extrapolation."""


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Series CSV.")
@_config_options
@click.option("--output-dir", default=".", help="Where to write outputs.")
@click.option("--plots", is_flag=True, default=False, help="Also emit SVG plots.")
@_fatal_errors
def run(input_path, config, train, test, levels, nu, k, seed, methods, output_dir, plots):
    """Fit on the train range, predict and evaluate on the test range."""
    cfg = _build_config(config, train, test, levels, nu, k, seed, methods)
    series = load_series(input_path)
    result = run_postprocess(series, cfg)
    outdir = _ensure_dir(output_dir)
    _write_run_outputs(outdir, result, plots)
    (outdir / "run_config.json").write_text(
        json.dumps(cfg.to_dict(), indent=1), encoding="utf-8"
    )
    if plots:
        from . import plots as plotting

        _, test_obs, _ = slice_series(series, cfg.test)
        plotting.prediction_series_svg(
            test_obs, result.table, outdir / "predictions.svg"
        )
    model = result.model
    click.echo(
        f"basin {result.basin_id}: n_train={result.n_train} n_test={result.n_test} "
        f"k={model.k} tau_base={model.tau_base:.6f} gamma_pool={model.gamma_pool:.4f} "
        f"excluded={model.excluded_count}"
    )
    click.echo(f"wrote predictions, report and model to {outdir}")


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Series CSV.")
@_config_options
@click.option("--output-dir", default=".", help="Where to write model.json.")
@_fatal_errors
def fit(input_path, config, train, test, levels, nu, k, seed, methods, output_dir):
    """Fit a model on the train range and write it as model.json."""
    doc: dict = {}
    if config is not None:
        doc = json.loads(Path(config).read_text(encoding="utf-8"))
    train_text = train or doc.get("train")
    if train_text is None:
        raise InvalidInputError("--train range is required (flag or config file)")
    train_range = DateRange.parse(train_text) if isinstance(train_text, str) \
        else DateRange(date.fromisoformat(train_text[0]), date.fromisoformat(train_text[1]))
    level_values = tuple(
        float(t) for t in (levels.split(",") if levels else doc.get("levels", ()))
    ) or None
    nu_value = nu if nu is not None else float(doc.get("nu", 0.1))
    k_value = k if k is not None else doc.get("k")

    series = load_series(input_path)
    _, train_obs, train_sim = slice_series(series, train_range)
    dataset = Dataset(train_sim[:, None], train_obs)
    cfg = None
    if k_value not in (None, "auto"):
        cfg = TailConfig(n=dataset.n, k=int(k_value), nu=nu_value)
    kwargs = {"target_levels": level_values} if level_values else {}
    model = fit_extremal(dataset, cfg=cfg, nu=nu_value, **kwargs)
    outdir = _ensure_dir(output_dir)
    (outdir / "model.json").write_bytes(serialize_model(model))
    click.echo(
        f"fit {series.basin_id}: n={model.n} k={model.k} "
        f"tau_base={model.tau_base:.6f} gamma_pool={model.gamma_pool:.4f}"
    )


@main.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="model.json file.")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Series CSV.")
@click.option("--test", required=True, help="Date range START:END to predict over.")
@click.option("--levels", default=None,
              help="Subset of the model's target levels (comma-separated).")
@click.option("--methods", default=None,
              help="Comma-separated subset of conventional,extremal.")
@click.option("--output-dir", default=".", help="Where to write predictions.csv.")
@_fatal_errors
def predict(model_path, input_path, test, levels, methods, output_dir):
    """Predict quantiles over a date range with a previously fitted model."""
    model = deserialize_model(Path(model_path).read_bytes())
    series = load_series(input_path)
    test_range = DateRange.parse(test)
    test_dates, _, test_sim = slice_series(series, test_range)
    if not test_dates:
        raise InvalidInputError(f"no rows inside {test_range}")
    method_list = tuple(
        m.strip() for m in methods.split(",")) if methods else (
        METHOD_CONVENTIONAL, METHOD_EXTREMAL)
    table = build_prediction_table(
        model, test_sim[:, None], index=test_dates, methods=method_list
    )
    if levels is not None:
        wanted = [float(t) for t in levels.split(",") if t.strip()]
        missing = [t for t in wanted if t not in model.target_levels]
        if missing:
            raise InvalidInputError(
                f"levels {missing} are not among the model's target levels "
                f"{list(model.target_levels)}"
            )
        table = replace(
            table,
            levels=tuple(sorted(wanted)),
            values={k2: v for k2, v in table.values.items() if k2[1] in wanted},
        )
    outdir = _ensure_dir(output_dir)
    write_predictions_csv(outdir / "predictions.csv", table)
    click.echo(
        f"wrote {len(table.methods) * len(table.levels)} series of "
        f"{len(table)} values to {outdir / 'predictions.csv'}"
    )


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Series CSV with the observations.")
@click.option("--predictions", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Predictions CSV from run/predict.")
@click.option("--output-dir", default=".", help="Where to write the report.")
@_fatal_errors
def evaluate(input_path, predictions, output_dir):
    """Evaluate a predictions file against observations.

    Covers exceedance counts, extremal/conventional log ratios, and the
    moderate-level quantile score.  Tail-index summaries need the model
    and training data, so they appear in ``run`` reports only.
    """
    from .evaluate import evaluate_predictions

    series = load_series(input_path)
    by_key = read_predictions_csv(predictions)
    if not by_key:
        raise InvalidInputError(f"{predictions}: no prediction rows")
    date_sets = [set(v) for v in by_key.values()]
    common = set.intersection(*date_sets)
    obs_by_date = {d.isoformat(): o for d, o in zip(series.dates, series.obs)}
    common &= set(obs_by_date)
    if not common:
        raise InvalidInputError(
            "no dates shared by the observations and every prediction series"
        )
    days = sorted(common)
    methods = tuple(sorted({m for m, _ in by_key}))
    levels = tuple(sorted({t for _, t in by_key}))
    values = {}
    for (method, level), series_map in by_key.items():
        values[(method, level)] = [series_map[d] for d in days]
    import numpy as np

    table = PredictionTable(
        index=tuple(days),
        levels=levels,
        methods=methods,
        values={k2: np.asarray(v) for k2, v in values.items()},
        fallback=np.zeros(len(days), dtype=bool),
        below_tail_levels=(),
        rearranged=0,
    )
    observed = [obs_by_date[d] for d in days]
    report = evaluate_predictions(observed, table)
    outdir = _ensure_dir(output_dir)
    _write_report_files(outdir, report)
    click.echo(f"evaluated {len(days)} dates; report written to {outdir}")


def _read_manifest(path) -> list[tuple[Path, str]]:
    p = Path(path)
    base = p.parent
    entries: list[tuple[Path, str]] = []
    if p.suffix.lower() == ".json":
        doc = json.loads(p.read_text(encoding="utf-8"))
        for item in doc:
            try:
                entries.append((base / item["path"], str(item["basin_id"])))
            except (KeyError, TypeError):
                raise InvalidInputError(
                    f"{path}: manifest entries need 'path' and 'basin_id'"
                ) from None
        return entries
    with open(p, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header] != ["path", "basin_id"]:
            raise SeriesFormatError(f"{path}: expected header 'path,basin_id'", line=1)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise SeriesFormatError(f"{path}: malformed manifest row {row!r}")
            entries.append((base / row[0].strip(), row[1].strip()))
    return entries


@main.command()
@click.option("--manifest", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="CSV (path,basin_id) or JSON manifest of series files.")
@_config_options
@click.option("--output-dir", default=".", help="Root for per-basin outputs.")
@click.option("--plots", is_flag=True, default=False, help="Also emit SVG plots.")
@click.option("--workers", type=int, default=None, help="Concurrent basin runs.")
@_fatal_errors
def batch(manifest, config, train, test, levels, nu, k, seed, methods, output_dir,
          plots, workers):
    """Run the post-processing workflow over every basin in a manifest.

    Failing basins are reported in summary.json without aborting the rest;
    exit code 3 signals partial failure."""
    cfg = _build_config(config, train, test, levels, nu, k, seed, methods)
    entries = _read_manifest(manifest)
    result = run_batch(entries, cfg, workers=workers)
    outdir = _ensure_dir(output_dir)
    for basin_id, run_result in result.results.items():
        _write_run_outputs(_ensure_dir(outdir / basin_id), run_result, plots)
    (outdir / "summary.json").write_text(
        json.dumps(result.summary, indent=1), encoding="utf-8"
    )
    click.echo(
        f"batch: {len(result.results)} basins succeeded, "
        f"{len(result.failures)} failed; summary at {outdir / 'summary.json'}"
    )
    for basin_id, reason in sorted(result.failures.items()):
        click.echo(f"  failed {basin_id}: {reason}", err=True)
    if result.failures:
        sys.exit(EXIT_PARTIAL_FAILURE)


@main.command()
@click.option("--n", type=int, required=True, help="Number of daily rows.")
@click.option("--gamma", type=float, required=True, help="True tail index (> 0).")
@click.option("--a0", type=float, default=1.0, help="Scale intercept (> 0).")
@click.option("--a1", type=float, default=1.0, help="Scale slope (>= 0).")
@click.option("--seed", type=int, default=0, help="Generator seed.")
@click.option("--start-date", default="2010-01-01", help="First calendar day.")
@click.option("--basin-id", default="synthetic", help="Basin id for the series.")
@click.option("--output-dir", default=".", help="Where to write series.csv.")
@_fatal_errors
def synth(n, gamma, a0, a1, seed, start_date, basin_id, output_dir):
    """Generate a heavy-tailed synthetic series (obs = y, sim = x)."""
    spec = SynthSpec(n=n, gamma=gamma, a0=a0, a1=a1, seed=seed)
    try:
        start = date.fromisoformat(start_date)
    except ValueError as exc:
        raise InvalidInputError(f"malformed --start-date: {exc}") from None
    series = synthetic_series(spec, start=start, basin_id=basin_id)
    outdir = _ensure_dir(output_dir)
    write_series_csv(outdir / "series.csv", series)
    sidecar = {
        "n": spec.n,
        "gamma": spec.gamma,
        "a0": spec.a0,
        "a1": spec.a1,
        "seed": spec.seed,
        "start_date": start.isoformat(),
        "basin_id": basin_id,
        "generator": "pcg64",
    }
    (outdir / "series_spec.json").write_text(
        json.dumps(sidecar, indent=1), encoding="utf-8"
    )
    click.echo(f"wrote {len(series)} rows to {outdir / 'series.csv'}")


@main.command()
@click.option("--a", "path_a", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Predictions CSV A.")
@click.option("--b", "path_b", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Predictions CSV B.")
@click.option("--output", default=None, help="Write JSON here instead of stdout.")
@_fatal_errors
def compare(path_a, path_b, output):
    """Log quantile ratios log(A/B) between two prediction files.

    Series are matched by (method, level) and compared over shared dates."""
    preds_a = read_predictions_csv(path_a)
    preds_b = read_predictions_csv(path_b)
    shared = sorted(set(preds_a) & set(preds_b))
    if not shared:
        raise InvalidInputError("the files share no (method, level) series")
    out: dict = {}
    for method, level in shared:
        map_a, map_b = preds_a[(method, level)], preds_b[(method, level)]
        days = sorted(set(map_a) & set(map_b))
        if not days:
            continue
        stats = log_quantile_ratio(
            [map_a[d] for d in days], [map_b[d] for d in days]
        )
        out.setdefault(method, {})[repr(level)] = {
            "n": len(days),
            "mean": stats.mean,
            "median": stats.median,
            "n_dropped": stats.n_dropped,
        }
    text = json.dumps(out, indent=1)
    if output:
        Path(output).write_text(text, encoding="utf-8")
        click.echo(f"wrote comparison to {output}")
    else:
        click.echo(text)


if __name__ == "__main__":
    main()
