"""Pinball loss and exact linear quantile regression.

The solver minimises the average quantile score

    (1/n) sum_i rho_tau(y_i - alpha - x_i' beta)

by linear programming.  It works on the dual LP (n box-constrained
variables, p + 1 equality constraints), which is much faster than the
primal for long series, and recovers the coefficients from the
zero-residual rows identified by complementary slackness.  Whenever that
recovery is ambiguous (degenerate optima, duplicated rows) it falls back
to the primal LP, so the returned objective is always the certified LP
optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import (
    DegenerateDesignError,
    InvalidInputError,
    SolverFailureError,
    TailQRError,
)

DEFAULT_MAX_ITER = 10_000


def check_quantile_level(tau) -> float:
    """Validate a quantile level, returning it as a float in (0, 1)."""
    tau = float(tau)
    if not math.isfinite(tau) or not 0.0 < tau < 1.0:
        raise InvalidInputError(
            f"quantile level must lie strictly inside (0, 1), got {tau}"
        )
    return tau


def pinball_loss(u, tau):
    """Quantile loss u * (tau - 1[u <= 0]) for a residual or residual array.

    Nonnegative, and zero exactly at u = 0; at tau = 1/2 it is half the
    absolute error.
    """
    tau = check_quantile_level(tau)
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("residuals must be finite")
    out = arr * (tau - (arr <= 0.0)) + 0.0  # adding 0.0 clears -0.0 at u = 0
    if arr.ndim == 0:
        return float(out)
    return out


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Covariate matrix (n x p) and response vector (length n).

    Rejects non-finite entries and samples smaller than p + 2, so that a
    fit is never a pure interpolation problem.  A 1-d design is treated as
    a single covariate column.  Arrays are copied and frozen.
    """

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        if design.ndim == 1:
            design = design[:, None]
        if design.ndim != 2:
            raise InvalidInputError("design must be a 2-d matrix")
        response = np.asarray(self.response, dtype=float).ravel()
        n, p = design.shape
        if p < 1:
            raise InvalidInputError("design needs at least one covariate column")
        if response.shape[0] != n:
            raise InvalidInputError(
                f"design has {n} rows but response has {response.shape[0]}"
            )
        if not np.all(np.isfinite(design)) or not np.all(np.isfinite(response)):
            raise InvalidInputError("design and response must be finite")
        if n < p + 2:
            raise InvalidInputError(
                f"need at least p + 2 = {p + 2} samples, got {n}"
            )
        object.__setattr__(self, "design", _readonly(design))
        object.__setattr__(self, "response", _readonly(response))

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class LinearQuantileFit:
    """Fitted intercept and coefficients for one quantile level.

    ``objective`` is the achieved mean pinball loss on the training data.
    """

    tau: float
    alpha: float
    beta: np.ndarray
    objective: float

    def __post_init__(self):
        object.__setattr__(self, "beta", _readonly(np.ravel(self.beta)))

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def predict(self, x) -> float:
        return predict_linear(self, x)


def predict_linear(fit: LinearQuantileFit, x) -> float:
    """Evaluate alpha + x' beta for a single covariate vector."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != fit.p:
        raise InvalidInputError(
            f"covariate vector has length {x.shape[0]}, expected {fit.p}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("covariate vector must be finite")
    return float(fit.alpha + x @ fit.beta)


def _augmented(design: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((design.shape[0], 1)), design])


def _check_lp_status(res, max_iter):
    if res.status == 1:
        raise SolverFailureError(
            f"quantile regression did not converge within {max_iter} iterations",
            iterations=int(res.nit),
        )
    if res.status != 0:
        raise SolverFailureError(
            f"LP solver failed (status {res.status}): {res.message}",
            iterations=int(res.nit),
        )


def _solve_dual(A, y, tau, max_iter):
    # max y'd  s.t.  A'd = 0,  tau - 1 <= d_i <= tau; optimum equals the
    # primal sum of pinball losses by strong duality.
    n = A.shape[0]
    res = linprog(
        -y,
        A_eq=A.T,
        b_eq=np.zeros(A.shape[1]),
        bounds=[(tau - 1.0, tau)] * n,
        method="highs",
        options={"maxiter": max_iter},
    )
    _check_lp_status(res, max_iter)
    return res


def _solve_primal(A, y, tau, max_iter):
    # min tau 1'u + (1 - tau) 1'v  s.t.  A theta + u - v = y, u, v >= 0
    n, p1 = A.shape
    c = np.concatenate([np.zeros(p1), np.full(n, tau), np.full(n, 1.0 - tau)])
    eye = sp.identity(n, format="csr")
    A_eq = sp.hstack([sp.csr_matrix(A), eye, -eye], format="csr")
    bounds = [(None, None)] * p1 + [(0.0, None)] * (2 * n)
    res = linprog(
        c, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs",
        options={"maxiter": max_iter},
    )
    _check_lp_status(res, max_iter)
    return res.x[:p1]


def _recover_theta(A, y, d, tau):
    """Coefficients from the dual solution, or None when ambiguous.

    Rows whose dual variable is strictly inside (tau - 1, tau) must have a
    zero residual at any primal optimum.  Generic data yields exactly p + 1
    such rows, pinning down the optimal hyperplane.
    """
    p1 = A.shape[1]
    eps = 1e-7
    interior = (d > tau - 1.0 + eps) & (d < tau - eps)
    idx = np.flatnonzero(interior)
    if idx.shape[0] < p1:
        return None
    sub = A[idx]
    theta, _, rank, _ = np.linalg.lstsq(sub, y[idx], rcond=None)
    if rank < p1:
        return None
    return theta


def _fit_checked(A, y, tau, max_iter):
    """Fit assuming the design rank and response variation were vetted."""
    res = _solve_dual(A, y, tau, max_iter)
    dual_obj = -res.fun
    theta = _recover_theta(A, y, res.x, tau)
    if theta is not None:
        achieved = float(np.sum(pinball_loss(y - A @ theta, tau)))
        scale = max(1.0, abs(dual_obj), float(np.mean(np.abs(y))))
        if not abs(achieved - dual_obj) <= 1e-8 * scale:
            theta = None
    if theta is None:
        theta = _solve_primal(A, y, tau, max_iter)
    objective = float(np.mean(pinball_loss(y - A @ theta, tau)))
    return theta, objective


def fit_quantile_regression(
    data: Dataset, tau, max_iter: int = DEFAULT_MAX_ITER
) -> LinearQuantileFit:
    """Fit alpha(tau), beta(tau) minimising the average quantile score.

    The objective of the returned fit equals the global LP minimum; when
    optima are not unique any optimal vertex may be returned.  A constant
    response short-circuits to beta = 0 with alpha equal to that constant.
    """
    tau = check_quantile_level(tau)
    y = data.response
    if np.ptp(y) == 0.0:
        return LinearQuantileFit(
            tau=tau, alpha=float(y[0]), beta=np.zeros(data.p), objective=0.0
        )
    A = _augmented(data.design)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise DegenerateDesignError(
            "augmented design is rank deficient (constant or collinear covariates)"
        )
    theta, objective = _fit_checked(A, y, tau, max_iter)
    return LinearQuantileFit(
        tau=tau, alpha=float(theta[0]), beta=theta[1:], objective=objective
    )


def fit_quantile_path(
    data: Dataset, levels, max_iter: int = DEFAULT_MAX_ITER
) -> list[LinearQuantileFit]:
    """Fit one quantile regression per level, levels strictly increasing.

    Failures are re-raised with the offending level recorded on the
    exception (``.level`` attribute and message prefix).
    """
    levels = [check_quantile_level(t) for t in np.asarray(levels, dtype=float).ravel()]
    if len(levels) == 0:
        raise InvalidInputError("need at least one quantile level")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidInputError("quantile levels must be strictly increasing")

    y = data.response
    constant_response = np.ptp(y) == 0.0
    A = _augmented(data.design)
    if not constant_response and np.linalg.matrix_rank(A) < A.shape[1]:
        raise DegenerateDesignError(
            "augmented design is rank deficient (constant or collinear covariates)"
        )

    fits = []
    for tau in levels:
        try:
            if constant_response:
                fit = LinearQuantileFit(
                    tau=tau, alpha=float(y[0]), beta=np.zeros(data.p), objective=0.0
                )
            else:
                theta, objective = _fit_checked(A, y, tau, max_iter)
                fit = LinearQuantileFit(
                    tau=tau, alpha=float(theta[0]), beta=theta[1:], objective=objective
                )
        except TailQRError as exc:
            exc.level = tau
            if exc.args:
                exc.args = (f"fit at level tau={tau} failed: {exc.args[0]}",) + exc.args[1:]
            raise
        fits.append(fit)
    return fits
