"""tailqr: far-tail conditional quantile prediction for deterministic
forecasts.

Couples linear quantile regression with heavy-tail extrapolation: fit a
grid of intermediate conditional quantiles, read each covariate point's
quantile path as upper order statistics, estimate the extreme value index
by averaging log ratios (Hill-type), pool it, and scale the path base out
to far-tail levels."""

from .errors import (
    BatchError,
    BelowTailError,
    DegenerateDesignError,
    EmptyComparisonError,
    EmptySeriesError,
    InsufficientTailWidthError,
    InvalidBaseError,
    InvalidConfigError,
    InvalidDirectionError,
    InvalidInputError,
    MissingFieldError,
    ModelFormatError,
    SchemaVersionError,
    SeriesFormatError,
    SolverFailureError,
    TailDegeneracyError,
    TailQRError,
)
from .evaluate import (
    EvaluationReport,
    EviSummary,
    LogRatioStats,
    evaluate_predictions,
    evi_summary,
    exceedance_rate,
    log_quantile_ratio,
    quantile_score,
)
from .evt import (
    EviEstimate,
    LevelGrid,
    QPath,
    TailConfig,
    default_k_candidates,
    hill_estimate,
    hill_estimates,
    intermediate_levels,
    pooled_evi,
    quantile_path,
    select_k,
    weissman_extrapolate,
)
from .model import (
    DEFAULT_TARGET_LEVELS,
    METHOD_CONVENTIONAL,
    METHOD_EXTREMAL,
    ExtremalQRModel,
    ExtremePrediction,
    PredictionTable,
    build_prediction_table,
    deserialize_model,
    fit_extremal,
    predict_conventional,
    predict_extreme,
    predict_extreme_batch,
    serialize_model,
)
from .pipeline import (
    BatchResult,
    DateRange,
    RunConfig,
    RunResult,
    SeriesPair,
    load_series,
    run_batch,
    run_postprocess,
    slice_series,
    synthetic_series,
)
from .qr import (
    Dataset,
    LinearQuantileFit,
    fit_quantile_path,
    fit_quantile_regression,
    pinball_loss,
    predict_linear,
)
from .synth import SynthSample, SynthSpec, derive_seed, generate, true_conditional_quantile

__version__ = "0.1.0"

__all__ = [
    "BatchError",
    "BatchResult",
    "BelowTailError",
    "Dataset",
    "DateRange",
    "DEFAULT_TARGET_LEVELS",
    "DegenerateDesignError",
    "deserialize_model",
    "EmptyComparisonError",
    "EmptySeriesError",
    "EvaluationReport",
    "EviEstimate",
    "EviSummary",
    "ExtremalQRModel",
    "ExtremePrediction",
    "InsufficientTailWidthError",
    "InvalidBaseError",
    "InvalidConfigError",
    "InvalidDirectionError",
    "InvalidInputError",
    "LevelGrid",
    "LinearQuantileFit",
    "LogRatioStats",
    "METHOD_CONVENTIONAL",
    "METHOD_EXTREMAL",
    "MissingFieldError",
    "ModelFormatError",
    "PredictionTable",
    "QPath",
    "RunConfig",
    "RunResult",
    "SchemaVersionError",
    "SeriesFormatError",
    "SeriesPair",
    "SolverFailureError",
    "SynthSample",
    "SynthSpec",
    "TailConfig",
    "TailDegeneracyError",
    "TailQRError",
    "build_prediction_table",
    "default_k_candidates",
    "derive_seed",
    "evaluate_predictions",
    "evi_summary",
    "exceedance_rate",
    "fit_extremal",
    "fit_quantile_path",
    "fit_quantile_regression",
    "generate",
    "hill_estimate",
    "hill_estimates",
    "intermediate_levels",
    "load_series",
    "log_quantile_ratio",
    "pinball_loss",
    "pooled_evi",
    "predict_conventional",
    "predict_extreme",
    "predict_extreme_batch",
    "predict_linear",
    "quantile_path",
    "quantile_score",
    "run_batch",
    "run_postprocess",
    "select_k",
    "serialize_model",
    "slice_series",
    "synthetic_series",
    "true_conditional_quantile",
    "weissman_extrapolate",
]
