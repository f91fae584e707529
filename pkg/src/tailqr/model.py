"""User-facing estimator: fit on a training set, predict far-tail
quantiles for new covariates, serialize models.

A fitted model holds the full intermediate fit grid (so quantile paths for
unseen covariates are recomputable), the pooled tail index, and plain
quantile-regression fits at the configured target levels.  The latter
serve two jobs: target levels below the grid's base level are answered by
conventional quantile regression outright (extrapolating inward is
undefined), and points whose quantile path has a non-positive base fall
back to them as well, mirroring the exclusion rule used when pooling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    BelowTailError,
    InvalidInputError,
    MissingFieldError,
    ModelFormatError,
    SchemaVersionError,
    TailDegeneracyError,
)
from .evt import (
    DEFAULT_NU,
    LevelGrid,
    TailConfig,
    default_k_candidates,
    grid_predictions,
    hill_estimates,
    intermediate_levels,
    pooled_evi,
    quantile_path,
    select_k,
    weissman_extrapolate,
)
from .qr import (
    DEFAULT_MAX_ITER,
    Dataset,
    LinearQuantileFit,
    check_quantile_level,
    fit_quantile_path,
    fit_quantile_regression,
    predict_linear,
)

SCHEMA_VERSION = 1
DEFAULT_TARGET_LEVELS = (0.9700, 0.9990, 0.9999)

METHOD_CONVENTIONAL = "conventional"
METHOD_EXTREMAL = "extremal"


@dataclass(frozen=True)
class ExtremalQRModel:
    """Immutable fitted model: intermediate fit grid plus pooled tail index."""

    grid: LevelGrid
    fits: tuple[LinearQuantileFit, ...]
    cfg: TailConfig
    gamma_pool: float
    excluded_count: int
    target_levels: tuple[float, ...]
    conventional_fits: tuple[LinearQuantileFit, ...]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "fits", tuple(self.fits))
        object.__setattr__(self, "conventional_fits", tuple(self.conventional_fits))
        object.__setattr__(self, "target_levels", tuple(float(t) for t in self.target_levels))
        if len(self.fits) != len(self.grid):
            raise InvalidInputError(
                f"{len(self.fits)} fits do not cover a grid of {len(self.grid)} levels"
            )
        if not self.gamma_pool >= 0.0:
            raise InvalidInputError(f"pooled gamma must be >= 0, got {self.gamma_pool}")
        if 2 * self.excluded_count > self.cfg.n:
            raise InvalidInputError(
                f"{self.excluded_count} exclusions out of {self.cfg.n} points"
            )
        if len(self.conventional_fits) != len(self.target_levels):
            raise InvalidInputError("need one conventional fit per target level")

    @property
    def n(self) -> int:
        return self.cfg.n

    @property
    def p(self) -> int:
        return self.fits[0].p

    @property
    def k(self) -> int:
        return self.cfg.k

    @property
    def nu(self) -> float:
        return self.cfg.nu

    @property
    def tau_base(self) -> float:
        return self.grid.tau_base


@dataclass(frozen=True)
class ExtremePrediction:
    """One far-tail prediction; ``fallback`` is True when the conventional
    fit served the point because its path base was not positive."""

    value: float
    fallback: bool = False


def fit_extremal(
    train: Dataset,
    cfg: TailConfig | None = None,
    target_levels=DEFAULT_TARGET_LEVELS,
    nu: float = DEFAULT_NU,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ExtremalQRModel:
    """Fit the intermediate grid, pool the per-point tail indices, and fit
    conventional regressions at the target levels.

    With ``cfg=None`` the number of upper levels is chosen by ``select_k``
    over the default candidate grid.  Refitting on identical input gives a
    bit-identical model.
    """
    levels = tuple(sorted(check_quantile_level(t) for t in target_levels))
    if len(set(levels)) != len(levels):
        raise InvalidInputError("target levels must be distinct")
    if cfg is None:
        k = select_k(train, default_k_candidates(train.n, nu), nu=nu)
        cfg = TailConfig(n=train.n, k=k, nu=nu)
    elif cfg.n != train.n:
        raise InvalidInputError(
            f"tail config was built for n={cfg.n}, training data has n={train.n}"
        )

    grid = intermediate_levels(train.n, cfg)
    fits = fit_quantile_path(train, grid.levels, max_iter=max_iter)
    estimates = hill_estimates(fits, train.design, cfg)
    gamma_pool = pooled_evi(estimates)
    excluded_count = sum(1 for e in estimates if e.excluded)
    conventional = tuple(
        fit_quantile_regression(train, tau, max_iter=max_iter) for tau in levels
    )
    return ExtremalQRModel(
        grid=grid,
        fits=tuple(fits),
        cfg=cfg,
        gamma_pool=gamma_pool,
        excluded_count=excluded_count,
        target_levels=levels,
        conventional_fits=conventional,
    )


def _conventional_fit_at(model: ExtremalQRModel, tau: float) -> LinearQuantileFit:
    for fit in model.conventional_fits:
        if fit.tau == tau:
            return fit
    raise InvalidInputError(
        f"no conventional fallback fit stored at tau={tau}; "
        f"model carries {model.target_levels}"
    )


def predict_extreme(model: ExtremalQRModel, x, tau) -> ExtremePrediction:
    """Far-tail prediction at tau >= the model's base level.

    Extrapolates the monotone quantile-path base with the pooled tail
    index.  Points whose base is not positive are served by the stored
    conventional fit at tau and flagged.  Levels below the base level
    raise ``BelowTailError``: conventional regression owns that range.
    """
    tau = check_quantile_level(tau)
    if tau < model.tau_base:
        raise BelowTailError(
            f"tau={tau} lies below the intermediate base level "
            f"{model.tau_base:.6f}; use conventional quantile regression",
            tau=tau,
            tau_base=model.tau_base,
        )
    path = quantile_path(list(model.fits), x)
    if not path.positive_base:
        fit = _conventional_fit_at(model, tau)
        return ExtremePrediction(value=predict_linear(fit, x), fallback=True)
    value = weissman_extrapolate(path.base, model.tau_base, tau, model.gamma_pool)
    return ExtremePrediction(value=value)


def predict_extreme_batch(model: ExtremalQRModel, X, tau) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``predict_extreme`` over rows of X.

    Returns (values, fallback mask).  Rows needing fallback require a
    stored conventional fit at tau.
    """
    tau = check_quantile_level(tau)
    if tau < model.tau_base:
        raise BelowTailError(
            f"tau={tau} lies below the intermediate base level {model.tau_base:.6f}",
            tau=tau,
            tau_base=model.tau_base,
        )
    P = grid_predictions(list(model.fits), X)
    base = np.sort(P, axis=1)[:, 0]
    fallback = base <= 0.0
    factor = ((1.0 - model.tau_base) / (1.0 - tau)) ** model.gamma_pool
    values = np.where(fallback, np.nan, base * factor)
    if np.any(fallback):
        fit = _conventional_fit_at(model, tau)
        X2 = np.asarray(X, dtype=float)
        if X2.ndim == 1:
            X2 = X2[:, None]
        values[fallback] = fit.alpha + X2[fallback] @ fit.beta
    return values, fallback


def predict_conventional(train: Dataset, x, tau) -> float:
    """Plain quantile regression: fit at tau on the training data, then
    evaluate at x."""
    return predict_linear(fit_quantile_regression(train, tau), x)


@dataclass(frozen=True)
class PredictionTable:
    """Per-index predictions for each (method, level) pair.

    Extremal columns are rearranged ascending across levels per index, so
    the table never shows crossing far-tail quantiles; ``rearranged``
    counts the indices that needed it.  ``below_tail_levels`` lists target
    levels served entirely by the conventional fits, and ``fallback`` marks
    the points whose extrapolation base was not positive.
    """

    index: tuple
    levels: tuple[float, ...]
    methods: tuple[str, ...]
    values: dict
    fallback: np.ndarray
    below_tail_levels: tuple[float, ...]
    rearranged: int

    def series(self, method: str, level: float) -> np.ndarray:
        return self.values[(method, float(level))]

    def __len__(self) -> int:
        return len(self.index)


def build_prediction_table(
    model: ExtremalQRModel,
    X,
    index=None,
    methods=(METHOD_CONVENTIONAL, METHOD_EXTREMAL),
) -> PredictionTable:
    """Predict every (method, target level) series for the covariate rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    m = X.shape[0]
    if index is None:
        index = tuple(range(m))
    else:
        index = tuple(index)
        if len(index) != m:
            raise InvalidInputError(f"index has {len(index)} entries for {m} rows")
    methods = tuple(methods)
    for method in methods:
        if method not in (METHOD_CONVENTIONAL, METHOD_EXTREMAL):
            raise InvalidInputError(f"unknown method {method!r}")
    levels = model.target_levels

    conventional = {
        fit.tau: fit.alpha + X @ fit.beta for fit in model.conventional_fits
    }

    P = grid_predictions(list(model.fits), X)
    base = np.sort(P, axis=1)[:, 0]
    fallback = base <= 0.0

    values: dict = {}
    below_tail = tuple(t for t in levels if t < model.tau_base)
    if METHOD_CONVENTIONAL in methods:
        for tau in levels:
            values[(METHOD_CONVENTIONAL, tau)] = conventional[tau].copy()

    rearranged = 0
    if METHOD_EXTREMAL in methods:
        cols = []
        for tau in levels:
            if tau < model.tau_base:
                col = conventional[tau].copy()
            else:
                factor = ((1.0 - model.tau_base) / (1.0 - tau)) ** model.gamma_pool
                col = base * factor
                col[fallback] = conventional[tau][fallback]
            cols.append(col)
        V = np.column_stack(cols)
        V_sorted = np.sort(V, axis=1)
        rearranged = int(np.sum(np.any(V_sorted != V, axis=1)))
        for j, tau in enumerate(levels):
            values[(METHOD_EXTREMAL, tau)] = V_sorted[:, j]

    return PredictionTable(
        index=index,
        levels=levels,
        methods=methods,
        values=values,
        fallback=fallback,
        below_tail_levels=below_tail,
        rearranged=rearranged,
    )


_REQUIRED_FIELDS = (
    "schema_version",
    "n",
    "p",
    "nu",
    "k",
    "tau_base",
    "gamma_pool",
    "excluded_count",
    "grid",
    "fits",
    "target_levels",
    "conventional_fits",
)


def _fit_to_dict(fit: LinearQuantileFit) -> dict:
    return {
        "tau": fit.tau,
        "alpha": fit.alpha,
        "beta": [float(b) for b in fit.beta],
        "objective": fit.objective,
    }


def _fit_from_dict(obj: dict, p: int) -> LinearQuantileFit:
    try:
        fit = LinearQuantileFit(
            tau=float(obj["tau"]),
            alpha=float(obj["alpha"]),
            beta=np.asarray(obj["beta"], dtype=float),
            objective=float(obj["objective"]),
        )
    except KeyError as exc:
        raise MissingFieldError(f"fits[].{exc.args[0]}") from exc
    if fit.p != p:
        raise ModelFormatError(
            f"fit at tau={fit.tau} has {fit.p} coefficients, expected {p}"
        )
    return fit


def serialize_model(model: ExtremalQRModel) -> bytes:
    """Encode a model as UTF-8 JSON with full round-trip float precision."""
    doc = {
        "schema_version": model.schema_version,
        "n": model.n,
        "p": model.p,
        "nu": model.nu,
        "k": model.k,
        "tau_base": model.tau_base,
        "gamma_pool": model.gamma_pool,
        "excluded_count": model.excluded_count,
        "grid": [float(t) for t in model.grid.levels],
        "fits": [_fit_to_dict(f) for f in model.fits],
        "target_levels": list(model.target_levels),
        "conventional_fits": [_fit_to_dict(f) for f in model.conventional_fits],
    }
    return json.dumps(doc, indent=1).encode("utf-8")


def deserialize_model(blob: bytes) -> ExtremalQRModel:
    """Decode ``serialize_model`` output; value-identical round trip."""
    try:
        doc = json.loads(blob)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("expected a JSON object")
    for fieldname in _REQUIRED_FIELDS:
        if fieldname not in doc:
            raise MissingFieldError(fieldname)
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported schema version {version!r}; this build reads {SCHEMA_VERSION}",
            version=version,
        )

    n, p, k, nu = int(doc["n"]), int(doc["p"]), int(doc["k"]), float(doc["nu"])
    cfg = TailConfig(n=n, k=k, nu=nu)
    grid = intermediate_levels(n, cfg)
    stored = np.asarray(doc["grid"], dtype=float)
    if stored.shape != grid.levels.shape or not np.array_equal(stored, grid.levels):
        raise ModelFormatError("stored level grid is inconsistent with n, k, nu")
    if float(doc["tau_base"]) != grid.tau_base:
        raise ModelFormatError("stored tau_base is inconsistent with the grid")

    fits = tuple(_fit_from_dict(obj, p) for obj in doc["fits"])
    conventional = tuple(_fit_from_dict(obj, p) for obj in doc["conventional_fits"])
    return ExtremalQRModel(
        grid=grid,
        fits=fits,
        cfg=cfg,
        gamma_pool=float(doc["gamma_pool"]),
        excluded_count=int(doc["excluded_count"]),
        target_levels=tuple(float(t) for t in doc["target_levels"]),
        conventional_fits=conventional,
        schema_version=int(version),
    )
