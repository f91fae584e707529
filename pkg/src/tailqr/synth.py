"""Synthetic heavy-tailed fixtures with closed-form conditional quantiles.

Draws follow y = (a0 + a1 x) * (1 - U)^(-gamma) with x, U independent
uniform on [0, 1], so every conditional quantile is available exactly:

    Q(tau | x) = (a0 + a1 x) * (1 - tau)^(-gamma)

which is linear in x at every level.  That makes these samples an
independent ground truth for the regression and extrapolation layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .qr import Dataset, check_quantile_level


@dataclass(frozen=True)
class SynthSpec:
    """Generating law: sample size, tail index, affine scale, seed."""

    n: int
    gamma: float
    a0: float = 1.0
    a1: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n}")
        if not self.gamma > 0.0:
            raise InvalidInputError(f"gamma must be > 0, got {self.gamma}")
        if not self.a0 > 0.0:
            raise InvalidInputError(f"scale intercept must be > 0, got {self.a0}")
        if self.a1 < 0.0:
            raise InvalidInputError(f"scale slope must be >= 0, got {self.a1}")


@dataclass(frozen=True)
class SynthSample:
    """Generated dataset together with the underlying x and U draws."""

    dataset: Dataset
    x: np.ndarray
    u: np.ndarray
    spec: SynthSpec


def generate(spec: SynthSpec) -> SynthSample:
    """Draw a sample from the spec's law, deterministically per seed.

    Uses numpy's PCG64 generator so fixtures are byte-stable across
    platforms for a given seed.
    """
    rng = np.random.default_rng(spec.seed)
    x = rng.random(spec.n)
    u = rng.random(spec.n)
    y = (spec.a0 + spec.a1 * x) * (1.0 - u) ** (-spec.gamma)
    return SynthSample(dataset=Dataset(x[:, None], y), x=x, u=u, spec=spec)


def true_conditional_quantile(x, tau, spec: SynthSpec):
    """Exact conditional quantile of the generating law; accepts a scalar
    or an array of covariate values."""
    tau = check_quantile_level(tau)
    scale = spec.a0 + spec.a1 * np.asarray(x, dtype=float)
    out = scale * (1.0 - tau) ** (-spec.gamma)
    return float(out) if out.ndim == 0 else out


def derive_seed(seed: int, index: int) -> int:
    """Child seed for parallel generation.

    Splitting rule: feed (seed, index) into numpy's SeedSequence and take
    one 64-bit word, so sub-streams are independent and reproducible.
    """
    if index < 0:
        raise InvalidInputError(f"index must be >= 0, got {index}")
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])
