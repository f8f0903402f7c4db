"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import special
from scipy.stats import qmc

from .errors import CapacityError, ConfigurationError, DomainError, SingularCovarianceError
from .gaussian import cholesky

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    type SeedLike = int | np.random.SeedSequence | np.random.Generator

__all__ = (
    "QMCSettings",
    "RectProbEstimate",
    "mvn_rect_prob",
    "mvt_rect_prob",
)

LOGGER = logging.getLogger(__name__)

_TINY = 1e-15
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, slots=True)
class QMCSettings:
    """Randomised QMC budget: ``n_shifts`` scrambled Sobol' replicates of ``n_points`` points each."""

    n_points: int = 1024
    n_shifts: int = 12
    max_dim: int = 100
    antithetic: bool = True

    def __post_init__(self) -> None:
        if self.n_points < 2 or self.n_points & (self.n_points - 1):
            msg = f"QMC point count must be a power of two, got {self.n_points}"
            raise ConfigurationError(msg, field="qmc.n_points")
        if self.n_shifts < 2:
            msg = f"At least two QMC replicates are needed for an error estimate, got {self.n_shifts}"
            raise ConfigurationError(msg, field="qmc.n_shifts")
        if self.max_dim < 1:
            raise ConfigurationError("QMC dimension guard must be positive.", field="qmc.max_dim")

    @property
    def log2_points(self) -> int:
        return self.n_points.bit_length() - 1


@dataclass(frozen=True, slots=True)
class RectProbEstimate:
    value: float
    std_error: float
    n_samples: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", min(max(float(self.value), 0.0), 1.0))
        if not math.isfinite(self.std_error) or self.std_error < 0:
            msg = f"Standard error must be finite and nonnegative, got {self.std_error}"
            raise DomainError(msg)

    def __str__(self) -> str:
        return f"{self.value:.6g} ± {self.std_error:.2g}"

    @property
    def log_value(self) -> float:
        return math.log(self.value) if self.value > 0 else -math.inf

    @classmethod
    def certain(cls) -> RectProbEstimate:
        return cls(1.0, 0.0, 0)


def _centered_bounds(
    mean: ArrayLike,
    cov: ArrayLike,
    lower: ArrayLike,
    upper: ArrayLike,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    mu = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    sigma = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    lo = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(upper, dtype=np.float64))

    d = mu.shape[0]
    if sigma.shape != (d, d) or lo.shape != (d,) or hi.shape != (d,):
        msg = f"Inconsistent shapes: mean {mu.shape}, cov {sigma.shape}, lower {lo.shape}, upper {hi.shape}"
        raise DomainError(msg)
    if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
        raise DomainError("Rectangle bounds must not be NaN.")
    if np.any(lo >= hi):
        raise DomainError("Rectangle lower bounds must be strictly below the upper bounds.")

    cholesky(sigma)
    return sigma, lo - mu, hi - mu


def _phi(x: NDArray[np.float64] | float) -> NDArray[np.float64] | float:
    return np.exp(-0.5 * np.square(x)) * _INV_SQRT_2PI


def _reorder(
    cov: NDArray[np.float64],
    lower: NDArray[np.float64],
    upper: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Pivoted Cholesky that integrates the tightest remaining interval first.

    Each step picks the variable with the smallest conditional interval probability given the
    truncated means of the variables already placed.
    """
    d = cov.shape[0]
    C = cov.copy()
    a = lower.copy()
    b = upper.copy()
    L = np.zeros((d, d))
    y = np.zeros(d)
    floor = 1e-14 * float(np.max(np.diag(C)))

    for i in range(d):
        variance = np.diag(C)[i:] - np.sum(np.square(L[i:, :i]), axis=1)
        if np.any(variance <= floor):
            msg = f"Covariance lost positive definiteness at pivot {i} while reordering"
            raise SingularCovarianceError(msg)
        sd = np.sqrt(variance)
        shift = L[i:, :i] @ y[:i]
        mass = special.ndtr((b[i:] - shift) / sd) - special.ndtr((a[i:] - shift) / sd)
        pick = i + int(np.argmin(mass))

        if pick != i:
            swap = [pick, i]
            C[[i, pick], :] = C[swap, :]
            C[:, [i, pick]] = C[:, swap]
            a[[i, pick]] = a[swap]
            b[[i, pick]] = b[swap]
            L[[i, pick], :] = L[swap, :]

        L[i, i] = sd[pick - i]
        if i + 1 < d:
            L[i + 1 :, i] = (C[i + 1 :, i] - L[i + 1 :, :i] @ L[i, :i]) / L[i, i]

        centre = L[i, :i] @ y[:i]
        lo = (a[i] - centre) / L[i, i]
        hi = (b[i] - centre) / L[i, i]
        p = special.ndtr(hi) - special.ndtr(lo)
        y[i] = (_phi(lo) - _phi(hi)) / p if p > _TINY else float(np.clip(0.0, lo, hi))

    return L, a, b


def _separated(
    points: NDArray[np.float64],
    factor: NDArray[np.float64],
    lower: NDArray[np.float64],
    upper: NDArray[np.float64],
    df: float | None,
) -> NDArray[np.float64]:
    """The separation-of-variables integrand evaluated on rows of ``points``.

    For Student laws the first column drives the radial variable and the bounds are rescaled by
    ``sqrt(W / df)`` with ``W`` chi-squared.
    """
    n = points.shape[0]
    d = factor.shape[0]
    if df is None:
        scale = np.ones(n)
        uniforms = points
    else:
        w0 = np.clip(points[:, 0], _TINY, 1.0 - _TINY)
        scale = np.sqrt(2.0 * special.gammaincinv(df / 2.0, w0) / df)
        uniforms = points[:, 1:]

    lo = lower[None, :] * scale[:, None]
    hi = upper[None, :] * scale[:, None]
    y = np.zeros((n, d))
    out = np.ones(n)
    for i in range(d):
        shift = y[:, :i] @ factor[i, :i]
        p_lo = special.ndtr((lo[:, i] - shift) / factor[i, i])
        p_hi = special.ndtr((hi[:, i] - shift) / factor[i, i])
        gap = np.maximum(p_hi - p_lo, 0.0)
        out *= gap
        if i + 1 < d:
            y[:, i] = special.ndtri(np.clip(p_lo + uniforms[:, i] * gap, _TINY, 1.0 - _TINY))
    return out


def _estimate(
    cov: NDArray[np.float64],
    lower: NDArray[np.float64],
    upper: NDArray[np.float64],
    settings: QMCSettings,
    rng: np.random.Generator,
    df: float | None,
) -> RectProbEstimate:
    d = cov.shape[0]
    if d > settings.max_dim:
        msg = f"Rectangle probability of dimension {d} exceeds the configured limit of {settings.max_dim}"
        raise CapacityError(msg)

    factor, a, b = _reorder(cov, lower, upper)
    dim = d - 1 if df is None else d
    means = np.empty(settings.n_shifts)
    for r, stream in enumerate(rng.spawn(settings.n_shifts)):
        points = qmc.Sobol(dim, scramble=True, seed=stream).random_base2(settings.log2_points)
        values = _separated(points, factor, a, b, df)
        if settings.antithetic:
            values = 0.5 * (values + _separated(1.0 - points, factor, a, b, df))
        means[r] = values.mean()

    per_shift = settings.n_points * (2 if settings.antithetic else 1)
    return RectProbEstimate(
        float(means.mean()),
        float(means.std(ddof=1) / math.sqrt(settings.n_shifts)),
        per_shift * settings.n_shifts,
    )


def mvn_rect_prob(
    mean: ArrayLike,
    cov: ArrayLike,
    lower: ArrayLike,
    upper: ArrayLike,
    config: QMCSettings | None = None,
    *,
    rng: SeedLike = 0,
) -> RectProbEstimate:
    """P(lower < X < upper) for X ~ N(mean, cov).

    Bounds may be infinite. One and zero dimensional problems are evaluated exactly.
    """
    sigma, a, b = _centered_bounds(mean, cov, lower, upper)
    d = sigma.shape[0]
    if d == 0:
        return RectProbEstimate.certain()
    if d == 1:
        sd = math.sqrt(sigma[0, 0])
        return RectProbEstimate(float(special.ndtr(b[0] / sd) - special.ndtr(a[0] / sd)), 0.0, 0)

    return _estimate(sigma, a, b, config or QMCSettings(), np.random.default_rng(rng), None)


def mvt_rect_prob(
    df: float,
    loc: ArrayLike,
    scale: ArrayLike,
    lower: ArrayLike,
    upper: ArrayLike,
    config: QMCSettings | None = None,
    *,
    rng: SeedLike = 0,
) -> RectProbEstimate:
    """P(lower < X < upper) for a multivariate Student law with ``df`` degrees of freedom."""
    if not df > 0 or not math.isfinite(df):
        msg = f"Degrees of freedom must be positive and finite, got {df}"
        raise DomainError(msg)

    sigma, a, b = _centered_bounds(loc, scale, lower, upper)
    d = sigma.shape[0]
    if d == 0:
        return RectProbEstimate.certain()
    if d == 1:
        sd = math.sqrt(sigma[0, 0])
        return RectProbEstimate(float(special.stdtr(df, b[0] / sd) - special.stdtr(df, a[0] / sd)), 0.0, 0)

    return _estimate(sigma, a, b, config or QMCSettings(), np.random.default_rng(rng), float(df))
