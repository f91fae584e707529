"""Evaluation of far-tail predictions.

Deliberately thin on scoring: statistical features of distribution tails
are not elicitable, so a proper score computed at a far-tail level cannot
rank methods there.  The report therefore leans on exceedance counting and
on-level comparison (log quantile ratios), and computes a quantile score
only at the moderate level where it still discriminates.  Requesting a
score at a level >= 0.999 is an error by design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyComparisonError, InvalidInputError
from .model import METHOD_CONVENTIONAL, METHOD_EXTREMAL, PredictionTable
from .qr import check_quantile_level, pinball_loss

MODERATE_SCORE_LEVEL = 0.97
#: No quantile score is ever computed at or above this level.
SCORE_LEVEL_CEILING = 0.999

EVI_BIN_WIDTH = 0.05
_EVI_BIN_EDGES = np.round(np.arange(0.0, 1.0 + EVI_BIN_WIDTH / 2, EVI_BIN_WIDTH), 10)


def _aligned(a, b, what="series"):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError(
            f"{what} lengths differ: {a.shape[0]} vs {b.shape[0]}"
        )
    if a.shape[0] == 0:
        raise InvalidInputError(f"empty {what}")
    return a, b


def exceedance_rate(observed, predicted) -> tuple[int, float]:
    """Count and rate of time steps where the observation strictly exceeds
    the predicted quantile; the nominal rate at level tau is 1 - tau."""
    observed, predicted = _aligned(observed, predicted)
    count = int(np.sum(observed > predicted))
    return count, count / observed.shape[0]


@dataclass(frozen=True)
class LogRatioStats:
    """Elementwise log(a/b) over positive pairs, with its mean and median."""

    series: np.ndarray
    mean: float
    median: float
    n_dropped: int

    def __post_init__(self):
        arr = np.asarray(self.series, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "series", arr)


def log_quantile_ratio(pred_a, pred_b) -> LogRatioStats:
    """Natural log of pred_a / pred_b; pairs with a non-positive member are
    dropped and counted."""
    pred_a, pred_b = _aligned(pred_a, pred_b, "prediction series")
    keep = (pred_a > 0.0) & (pred_b > 0.0)
    n_dropped = int(np.sum(~keep))
    if not np.any(keep):
        raise EmptyComparisonError(
            "every prediction pair had a non-positive member"
        )
    series = np.log(pred_a[keep] / pred_b[keep])
    return LogRatioStats(
        series=series,
        mean=float(np.mean(series)),
        median=float(np.median(series)),
        n_dropped=n_dropped,
    )


@dataclass(frozen=True)
class EviSummary:
    """Median, quartiles, and a fixed-width histogram of tail-index
    estimates: bins of width 0.05 on [0, 1] plus an overflow bin."""

    n: int
    median: float
    q1: float
    q3: float
    bin_width: float
    bin_counts: tuple[int, ...]
    overflow: int


def evi_summary(gammas) -> EviSummary:
    gammas = np.asarray(list(gammas), dtype=float).ravel()
    if gammas.shape[0] == 0:
        raise InvalidInputError("no tail-index estimates to summarise")
    if not np.all(np.isfinite(gammas)):
        raise InvalidInputError("tail-index estimates must be finite")
    counts, _ = np.histogram(np.clip(gammas, 0.0, None), bins=_EVI_BIN_EDGES)
    overflow = int(np.sum(gammas > 1.0))
    # np.histogram puts values == 1.0 in the last bin; keep them there and
    # count only strictly-above-1 values as overflow.
    return EviSummary(
        n=int(gammas.shape[0]),
        median=float(np.median(gammas)),
        q1=float(np.percentile(gammas, 25)),
        q3=float(np.percentile(gammas, 75)),
        bin_width=EVI_BIN_WIDTH,
        bin_counts=tuple(int(c) for c in counts),
        overflow=overflow,
    )


def quantile_score(observed, predicted, tau) -> float:
    """Mean pinball loss of a prediction series, moderate levels only."""
    tau = check_quantile_level(tau)
    if tau >= SCORE_LEVEL_CEILING:
        raise InvalidInputError(
            f"quantile scores are not computed at far-tail levels "
            f"(tau={tau} >= {SCORE_LEVEL_CEILING}): tail functionals are not "
            "elicitable, the score cannot rank methods there"
        )
    observed, predicted = _aligned(observed, predicted)
    return float(np.mean(pinball_loss(observed - predicted, tau)))


@dataclass
class EvaluationReport:
    """Exceedance, log-ratio, tail-index, and moderate-score summaries."""

    n_test: int
    exceedance: dict = field(default_factory=dict)
    log_ratio: dict = field(default_factory=dict)
    evi: EviSummary | None = None
    score_level: float | None = None
    scores: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """JSON-ready form; level keys are repr strings so they round-trip."""
        exceedance = {}
        for (method, level), (count, rate) in sorted(self.exceedance.items()):
            exceedance.setdefault(method, {})[repr(level)] = {
                "count": count,
                "rate": rate,
            }
        log_ratio = {
            repr(level): {
                "mean": stats.mean,
                "median": stats.median,
                "n_dropped": stats.n_dropped,
                "series": [float(v) for v in stats.series],
            }
            for level, stats in sorted(self.log_ratio.items())
        }
        doc = {
            "n_test": self.n_test,
            "exceedance": exceedance,
            "log_ratio": log_ratio,
        }
        if self.evi is not None:
            doc["evi"] = {
                "n": self.evi.n,
                "median": self.evi.median,
                "q1": self.evi.q1,
                "q3": self.evi.q3,
                "bin_width": self.evi.bin_width,
                "bin_counts": list(self.evi.bin_counts),
                "overflow": self.evi.overflow,
            }
        if self.score_level is not None:
            doc["quantile_score"] = {
                "level": self.score_level,
                "per_method": dict(sorted(self.scores.items())),
            }
        return doc

    def csv_tables(self) -> dict[str, list[list]]:
        """Flat tables mirroring ``to_dict``, one list of rows per name."""
        tables: dict[str, list[list]] = {}
        rows = [["method", "level", "count", "rate", "n_test"]]
        for (method, level), (count, rate) in sorted(self.exceedance.items()):
            rows.append([method, repr(level), count, rate, self.n_test])
        tables["exceedance"] = rows

        rows = [["level", "mean", "median", "n_dropped"]]
        for level, stats in sorted(self.log_ratio.items()):
            rows.append([repr(level), stats.mean, stats.median, stats.n_dropped])
        tables["log_ratio"] = rows

        if self.evi is not None:
            rows = [["bin_lo", "bin_hi", "count"]]
            for i, count in enumerate(self.evi.bin_counts):
                lo = round(i * self.evi.bin_width, 10)
                hi = round((i + 1) * self.evi.bin_width, 10)
                rows.append([lo, hi, count])
            rows.append([1.0, "inf", self.evi.overflow])
            tables["evi_histogram"] = rows

        if self.score_level is not None:
            rows = [["method", "level", "score"]]
            for method, score in sorted(self.scores.items()):
                rows.append([method, repr(self.score_level), score])
            tables["quantile_score"] = rows
        return tables


def evaluate_predictions(
    observed,
    table: PredictionTable,
    gammas=None,
    score_level: float | None = MODERATE_SCORE_LEVEL,
) -> EvaluationReport:
    """Build the full report for one test period.

    ``gammas`` are the per-point training tail indices feeding the
    histogram summary.  The quantile score is computed per method at
    ``score_level`` only when that level is among the table's levels.
    """
    observed = np.asarray(observed, dtype=float).ravel()
    if observed.shape[0] != len(table):
        raise InvalidInputError(
            f"{observed.shape[0]} observations for a table of {len(table)} rows"
        )
    report = EvaluationReport(n_test=len(table))

    for method in table.methods:
        for level in table.levels:
            report.exceedance[(method, level)] = exceedance_rate(
                observed, table.series(method, level)
            )

    if METHOD_EXTREMAL in table.methods and METHOD_CONVENTIONAL in table.methods:
        for level in table.levels:
            try:
                report.log_ratio[level] = log_quantile_ratio(
                    table.series(METHOD_EXTREMAL, level),
                    table.series(METHOD_CONVENTIONAL, level),
                )
            except EmptyComparisonError:
                continue

    if gammas is not None:
        gammas = [g for g in gammas if g is not None]
        if gammas:
            report.evi = evi_summary(gammas)

    if score_level is not None and any(
        math.isclose(score_level, lv) for lv in table.levels
    ):
        level = next(lv for lv in table.levels if math.isclose(score_level, lv))
        report.score_level = level
        for method in table.methods:
            report.scores[method] = quantile_score(
                observed, table.series(method, level), level
            )
    return report
