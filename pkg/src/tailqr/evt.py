"""Tail machinery: intermediate level grids, quantile paths, Hill-type
tail-index estimation, Weissman extrapolation, pooling, and selection of
the number of upper levels k.

The grid places quantile levels at tau_j = j/(n+1) for j = n-k, ..., m with
m = n - [n^nu], where [.] is the integer part.  Per-covariate quantile
paths over that grid behave like upper order statistics of the conditional
law, so averaging their log ratios against the lowest path value gives a
Hill-type estimate of the extreme value index, and multiplying the base by
((1 - tau_base)/(1 - tau_target))^gamma extrapolates it to far-tail levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientTailWidthError,
    InvalidBaseError,
    InvalidConfigError,
    InvalidDirectionError,
    InvalidInputError,
    TailDegeneracyError,
)
from .qr import Dataset, LinearQuantileFit, check_quantile_level, fit_quantile_path

DEFAULT_NU = 0.1
#: Minimum number of log-ratio terms k - [n^nu]; fewer makes the tail-index
#: average meaningless noise.
MIN_TAIL_WIDTH = 5


def integer_part(value: float) -> int:
    """Integer part [x], guarded against float representation error when
    the true power lands exactly on an integer."""
    return int(math.floor(value + 1e-12))


def tail_cut(n: int, nu: float) -> int:
    """[n^nu], the number of top levels excluded from the grid."""
    return integer_part(float(n) ** nu)


@dataclass(frozen=True)
class TailConfig:
    """Number of upper intermediate levels k and grid exponent nu for a
    sample of size n."""

    n: int
    k: int
    nu: float = DEFAULT_NU

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidConfigError(f"sample count must be a positive integer, got {self.n}")
        if not 0.0 < self.nu < 1.0:
            raise InvalidConfigError(f"nu must lie in (0, 1), got {self.nu}")
        if not isinstance(self.k, (int, np.integer)):
            raise InvalidConfigError(f"k must be an integer, got {self.k!r}")
        if self.k >= self.n:
            raise InvalidConfigError(f"k={self.k} must be smaller than n={self.n}")
        if self.width < MIN_TAIL_WIDTH:
            raise InsufficientTailWidthError(
                f"k={self.k} leaves only {self.width} log-ratio terms above "
                f"[n^nu]={self.cut}; need at least {MIN_TAIL_WIDTH}"
            )

    @property
    def cut(self) -> int:
        return tail_cut(self.n, self.nu)

    @property
    def width(self) -> int:
        """Hill divisor k - [n^nu]."""
        return self.k - self.cut

    @property
    def grid_size(self) -> int:
        return self.width + 1

    @property
    def m(self) -> int:
        """Highest grid index n - [n^nu]."""
        return self.n - self.cut

    @property
    def tau_base(self) -> float:
        return (self.n - self.k) / (self.n + 1.0)


@dataclass(frozen=True)
class LevelGrid:
    """Strictly increasing intermediate quantile levels j/(n+1)."""

    levels: np.ndarray
    n: int
    k: int
    nu: float
    m: int

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    def __len__(self) -> int:
        return self.levels.shape[0]

    @property
    def tau_base(self) -> float:
        return float(self.levels[0])


def intermediate_levels(n: int, cfg: TailConfig) -> LevelGrid:
    """Build the level grid tau_j = j/(n+1), j = n-k, ..., n-[n^nu]."""
    if n != cfg.n:
        raise InvalidConfigError(
            f"config was built for n={cfg.n}, asked to grid n={n}"
        )
    j = np.arange(n - cfg.k, cfg.m + 1, dtype=float)
    return LevelGrid(levels=j / (n + 1.0), n=n, k=cfg.k, nu=cfg.nu, m=cfg.m)


@dataclass(frozen=True)
class QPath:
    """Per-covariate quantile predictions over a level grid.

    ``raw`` follows grid order; ``monotone`` is the ascending rearrangement
    used as the order-statistic surrogate, so crossing fits are repaired by
    sorting.
    """

    raw: np.ndarray
    monotone: np.ndarray

    def __post_init__(self):
        for name in ("raw", "monotone"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_raw(cls, raw) -> "QPath":
        raw = np.asarray(raw, dtype=float).ravel()
        if raw.shape[0] == 0:
            raise InvalidInputError("quantile path cannot be empty")
        if not np.all(np.isfinite(raw)):
            raise InvalidInputError("quantile path must be finite")
        return cls(raw=raw, monotone=np.sort(raw))

    @property
    def base(self) -> float:
        return float(self.monotone[0])

    @property
    def positive_base(self) -> bool:
        return self.base > 0.0

    def __len__(self) -> int:
        return self.raw.shape[0]


def _fit_arrays(fits) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    taus = np.array([f.tau for f in fits], dtype=float)
    alphas = np.array([f.alpha for f in fits], dtype=float)
    betas = np.vstack([f.beta for f in fits])
    return taus, alphas, betas


def quantile_path(fits: list[LinearQuantileFit], x) -> QPath:
    """Predictions alpha(tau_j) + x' beta(tau_j) over an increasing-level
    fit list, rearranged to a monotone path."""
    if len(fits) == 0:
        raise InvalidInputError("need at least one fit")
    taus, alphas, betas = _fit_arrays(fits)
    if np.any(np.diff(taus) <= 0.0):
        raise InvalidInputError("fits must be ordered by strictly increasing level")
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != betas.shape[1]:
        raise InvalidInputError(
            f"covariate vector has length {x.shape[0]}, expected {betas.shape[1]}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("covariate vector must be finite")
    return QPath.from_raw(alphas + betas @ x)


def grid_predictions(fits: list[LinearQuantileFit], X) -> np.ndarray:
    """Raw path matrix (rows = covariate points, columns = grid levels)."""
    _, alphas, betas = _fit_arrays(fits)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return alphas[None, :] + X @ betas.T


@dataclass(frozen=True)
class EviEstimate:
    """Hill-type tail-index estimate for one covariate point.

    ``excluded`` marks points whose path base was not strictly positive;
    they carry no gamma and are skipped when pooling.
    """

    gamma: float | None
    k_used: int
    excluded: bool = False

    def __post_init__(self):
        if not self.excluded and (self.gamma is None or self.gamma < 0.0):
            raise InvalidInputError("included estimates need gamma >= 0")


def hill_estimate(path: QPath, cfg: TailConfig) -> EviEstimate:
    """Average log ratio of the monotone path against its base value.

    Gives (1/(k - [n^nu])) sum_j log(q_(j) / q_base) over the whole grid;
    the base term contributes log(1) = 0.  A non-positive base yields an
    excluded estimate instead of an error, signalling that the point
    cannot participate in pooling.
    """
    if len(path) != cfg.grid_size:
        raise InvalidInputError(
            f"path has {len(path)} entries, grid expects {cfg.grid_size}"
        )
    if not path.positive_base:
        return EviEstimate(gamma=None, k_used=cfg.k, excluded=True)
    gamma = float(np.sum(np.log(path.monotone / path.base)) / cfg.width)
    return EviEstimate(gamma=gamma, k_used=cfg.k)


def hill_estimates(fits: list[LinearQuantileFit], X, cfg: TailConfig) -> list[EviEstimate]:
    """Vectorised ``hill_estimate`` over the rows of X."""
    P = grid_predictions(fits, X)
    if P.shape[1] != cfg.grid_size:
        raise InvalidInputError(
            f"{P.shape[1]} fits do not match grid size {cfg.grid_size}"
        )
    paths = np.sort(P, axis=1)
    base = paths[:, 0]
    ok = base > 0.0
    out = []
    for i in range(P.shape[0]):
        if not ok[i]:
            out.append(EviEstimate(gamma=None, k_used=cfg.k, excluded=True))
        else:
            gamma = float(np.sum(np.log(paths[i] / base[i])) / cfg.width)
            out.append(EviEstimate(gamma=gamma, k_used=cfg.k))
    return out


def pooled_evi(estimates) -> float:
    """Arithmetic mean of the included gammas (exact summation, so the
    result does not depend on estimate order)."""
    estimates = list(estimates)
    if len(estimates) == 0:
        raise InvalidInputError("no estimates to pool")
    included = [e.gamma for e in estimates if not e.excluded]
    n_excluded = len(estimates) - len(included)
    if 2 * n_excluded > len(estimates):
        raise TailDegeneracyError(
            f"{n_excluded} of {len(estimates)} covariate points had a "
            "non-positive path base; pooled tail index is unreliable",
            n_excluded=n_excluded,
            n_total=len(estimates),
        )
    return math.fsum(included) / len(included)


def weissman_extrapolate(q_base: float, tau_base, tau_target, gamma: float) -> float:
    """Scale an intermediate quantile out to a far-tail level:

        q(tau_target) = ((1 - tau_base)/(1 - tau_target))^gamma * q_base

    Exact for Pareto tails; the factor is 1 at tau_target = tau_base and
    grows monotonically in both tau_target and gamma.
    """
    tau_base = check_quantile_level(tau_base)
    tau_target = check_quantile_level(tau_target)
    q_base = float(q_base)
    gamma = float(gamma)
    if not math.isfinite(q_base) or q_base <= 0.0:
        raise InvalidBaseError(f"base quantile must be > 0, got {q_base}")
    if tau_target < tau_base:
        raise InvalidDirectionError(
            f"target level {tau_target} lies below base level {tau_base}"
        )
    if not math.isfinite(gamma) or gamma < 0.0:
        raise InvalidInputError(f"gamma must be >= 0, got {gamma}")
    return ((1.0 - tau_base) / (1.0 - tau_target)) ** gamma * q_base


def default_k_candidates(n: int, nu: float = DEFAULT_NU) -> list[int]:
    """Candidate grid for automatic k selection: from max([n^nu]+5, 20) up
    to n//4 in steps of 5."""
    lo = max(tail_cut(n, nu) + MIN_TAIL_WIDTH, 20)
    hi = n // 4
    candidates = list(range(lo, hi + 1, 5))
    if not candidates:
        if lo < n:
            return [lo]
        raise InvalidConfigError(
            f"sample of size {n} is too small for automatic k selection"
        )
    return candidates


def k_selection_scores(data: Dataset, candidates, nu: float = DEFAULT_NU) -> dict[int, float]:
    """Validation criterion per candidate k.

    For each candidate, pools the per-point tail index over its grid, then
    extrapolates every point's base quantile to the candidate's top quarter
    of levels and scores the mean squared difference against the directly
    fitted quantiles there.  Candidates whose pooling degenerates
    (more than half the points excluded) are dropped.  All candidates
    share one batch of fits, since their grids are nested suffixes of the
    largest one.
    """
    candidates = sorted({int(k) for k in candidates})
    if not candidates:
        raise InvalidInputError("no candidate k values supplied")
    configs = [TailConfig(n=data.n, k=k, nu=nu) for k in candidates]

    grid_max = intermediate_levels(data.n, configs[-1])
    fits = fit_quantile_path(data, grid_max.levels)
    P = grid_predictions(fits, data.design)

    scores: dict[int, float] = {}
    for cfg in configs:
        L = cfg.grid_size
        Pk = P[:, -L:]
        paths = np.sort(Pk, axis=1)
        base = paths[:, 0]
        ok = base > 0.0
        n_excluded = int(np.sum(~ok))
        if 2 * n_excluded > data.n:
            continue
        gammas = np.sum(np.log(paths[ok] / base[ok, None]), axis=1) / cfg.width
        gamma_pool = math.fsum(map(float, gammas)) / gammas.shape[0]

        band = max(1, L // 4)
        taus_band = grid_max.levels[-band:]
        factor = ((1.0 - cfg.tau_base) / (1.0 - taus_band)) ** gamma_pool
        extrapolated = base[ok, None] * factor[None, :]
        direct = Pk[ok][:, -band:]
        scores[cfg.k] = float(np.mean((extrapolated - direct) ** 2))
    if not scores:
        raise TailDegeneracyError(
            "every candidate k produced a degenerate pooled tail index",
            n_total=len(candidates),
        )
    return scores


def _argmin_smallest(scores: dict[int, float]) -> int:
    best_k, best = None, math.inf
    for k in sorted(scores):
        if scores[k] < best:
            best_k, best = k, scores[k]
    return best_k


def select_k(data: Dataset, candidates, nu: float = DEFAULT_NU) -> int:
    """Pick the candidate k whose extrapolation best reproduces the
    directly fitted top-of-grid quantiles; ties go to the smaller k."""
    return _argmin_smallest(k_selection_scores(data, candidates, nu=nu))
