"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import special, stats

from .errors import DomainError, FamilyMismatchError
from .gaussian import CholeskyFactor, cholesky, gaussian_sample, schur_regression
from .geometry import Family, covariance_matrix, origin_semivariogram, resolve_origin
from .rectangle import RectProbEstimate, mvn_rect_prob, mvt_rect_prob

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from .geometry import DependenceModel, SiteSet
    from .partitions import Partition
    from .rectangle import QMCSettings, SeedLike

    type ConditionalLaw = BrConditionalLaw | SchConditionalLaw

__all__ = (
    "BlockWeight",
    "BrConditionalLaw",
    "BrConstants",
    "SchConditionalLaw",
    "block_weight",
    "br_conditional_law",
    "br_constants",
    "br_intensity",
    "br_log_intensity",
    "conditional_law",
    "log_intensity",
    "sch_conditional_law",
    "sch_intensity",
    "sch_log_intensity",
    "scenario_weight",
)

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)


def _require(model: DependenceModel, family: Family, /) -> None:
    if model.family is not family:
        raise FamilyMismatchError(family, model.family)


def _values(z: ArrayLike, k: int, *, positive: bool) -> NDArray[np.float64]:
    arr = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if arr.shape != (k,):
        msg = f"Expected {k} values, got shape {arr.shape}"
        raise DomainError(msg)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Values must be finite.")
    if positive and np.any(arr <= 0):
        raise DomainError("Brown–Resnick intensities are only defined for positive values.")
    if not positive and not np.any(arr):
        raise DomainError("The Schlather intensity is singular at the zero vector.")
    return arr


def _origin(x: SiteSet, origin: ArrayLike | None) -> NDArray[np.float64]:
    return resolve_origin(x) if origin is None else np.asarray(origin, dtype=np.float64)


# Brown–Resnick


@dataclass(frozen=True, slots=True, eq=False)
class BrConstants:
    """``log λ_x(z) = log C - ½ lᵀ Q l + L l - Σ l`` with ``l = log z``."""

    Q: NDArray[np.float64]
    L: NDArray[np.float64]
    log_C: float

    def log_intensity(self, z: ArrayLike, /) -> float:
        logz = np.log(np.asarray(z, dtype=np.float64))
        return float(self.log_C - 0.5 * logz @ self.Q @ logz + self.L @ logz - logz.sum())


def _br_pieces(
    x: SiteSet,
    model: DependenceModel,
    origin: ArrayLike | None,
) -> tuple[CholeskyFactor, NDArray[np.float64], NDArray[np.float64], float]:
    _require(model, Family.BROWN_RESNICK)
    if not len(x):
        raise DomainError("An intensity needs at least one site.")
    o = _origin(x, origin)
    factor = cholesky(covariance_matrix(x, model, origin=o, validate=False))
    g = origin_semivariogram(x, model, origin=o)
    P1 = factor.solve(np.ones(len(x)))
    return factor, g, P1, float(P1.sum())


def br_constants(x: SiteSet, model: DependenceModel, *, origin: ArrayLike | None = None) -> BrConstants:
    factor, g, P1, alpha = _br_pieces(x, model, origin)
    k = len(x)
    P = factor.solve(np.eye(k))
    Pg = factor.solve(g)
    drift = float(P1 @ g) - 1.0

    Q = P - np.outer(P1, P1) / alpha
    L = (drift / alpha) * P1 - Pg
    log_C = (
        -0.5 * (k - 1) * _LOG_2PI
        - 0.5 * factor.logdet()
        - 0.5 * math.log(alpha)
        + 0.5 * drift**2 / alpha
        - 0.5 * float(g @ Pg)
    )
    return BrConstants((Q + Q.T) / 2.0, L, log_C)


def br_log_intensity(
    x: SiteSet,
    z: ArrayLike,
    model: DependenceModel,
    *,
    origin: ArrayLike | None = None,
) -> float:
    """Log of the Brown–Resnick exponent measure density at ``z``.

    Obtained by integrating the Gaussian law of ``log ζ + W(x) - γ(x)`` against ``ζ⁻² dζ``.
    Does not depend on ``origin``; it defaults to a point near the centroid of ``x``.
    """
    factor, g, P1, alpha = _br_pieces(x, model, origin)
    k = len(x)
    logz = np.log(_values(z, k, positive=True))
    y = logz + g
    beta = float(P1 @ y) - 1.0
    return (
        -float(logz.sum())
        - 0.5 * (k - 1) * _LOG_2PI
        - 0.5 * factor.logdet()
        - 0.5 * math.log(alpha)
        + 0.5 * beta**2 / alpha
        - 0.5 * factor.quadratic_form(y)
    )


def br_intensity(x: SiteSet, z: ArrayLike, model: DependenceModel, *, origin: ArrayLike | None = None) -> float:
    return math.exp(br_log_intensity(x, z, model, origin=origin))


@dataclass(frozen=True, slots=True, eq=False)
class BrConditionalLaw:
    """Multivariate log-normal law of the targets: ``log U ~ N(mu, sigma)``."""

    mu: NDArray[np.float64]
    sigma: NDArray[np.float64]

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def logpdf(self, u: ArrayLike, /) -> float:
        values = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if np.any(values <= 0):
            return -math.inf
        logu = np.log(values)
        return float(stats.multivariate_normal.logpdf(logu, self.mu, self.sigma) - logu.sum())

    def pdf(self, u: ArrayLike, /) -> float:
        return math.exp(self.logpdf(u))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> NDArray[np.float64]:
        return np.exp(gaussian_sample(cholesky(self.sigma), self.mu, rng, size))

    def marginal(self, indices: Sequence[int], /) -> BrConditionalLaw:
        idx = np.asarray(indices, dtype=np.intp)
        return BrConditionalLaw(self.mu[idx], self.sigma[np.ix_(idx, idx)])

    def probability_below(
        self,
        upper: ArrayLike,
        config: QMCSettings | None = None,
        *,
        rng: SeedLike = 0,
    ) -> RectProbEstimate:
        """P(U < upper) computed on the log scale."""
        bound = np.log(np.asarray(upper, dtype=np.float64))
        return mvn_rect_prob(self.mu, self.sigma, np.full(self.dim, -np.inf), bound, config, rng=rng)


def br_conditional_law(
    s: SiteSet,
    x: SiteSet,
    z: ArrayLike,
    model: DependenceModel,
    *,
    origin: ArrayLike | None = None,
) -> BrConditionalLaw:
    """Law of the spectral function at ``s`` given that it equals ``z`` at ``x``.

    The common log-scale shift of the spectral function is integrated out, which turns the Gaussian
    kriging predictor into ``mu`` and adds a rank one term along ``1 - A 1`` to the kriging covariance.
    """
    _require(model, Family.BROWN_RESNICK)
    k = len(x)
    values = _values(z, k, positive=True)
    joint = s.concat(x)
    o = _origin(joint, origin)

    matrix = covariance_matrix(joint, model, origin=o, validate=False)
    g = origin_semivariogram(joint, model, origin=o)
    g_s, g_x = g[: len(s)], g[len(s) :]

    factor = cholesky(matrix[len(s) :, len(s) :])
    P1 = factor.solve(np.ones(k))
    alpha = float(P1.sum())
    y = np.log(values) + g_x
    beta = float(P1 @ y) - 1.0

    regression = schur_regression(matrix, k)
    c = 1.0 - regression.weights.sum(axis=1)
    mu = (beta / alpha) * c - g_s + regression.mean(y)
    sigma = regression.cov + np.outer(c, c) / alpha
    return BrConditionalLaw(mu, (sigma + sigma.T) / 2.0)


# Schlather


def sch_log_intensity(x: SiteSet, z: ArrayLike, model: DependenceModel) -> float:
    _require(model, Family.SCHLATHER)
    k = len(x)
    if not k:
        raise DomainError("An intensity needs at least one site.")
    values = _values(z, k, positive=False)
    factor = cholesky(covariance_matrix(x, model, validate=False))
    a = factor.quadratic_form(values)
    return (
        -0.5 * (k - 1) * _LOG_PI
        - 0.5 * factor.logdet()
        - 0.5 * (k + 1) * math.log(a)
        + float(special.gammaln((k + 1) / 2.0))
    )


def sch_intensity(x: SiteSet, z: ArrayLike, model: DependenceModel) -> float:
    return math.exp(sch_log_intensity(x, z, model))


@dataclass(frozen=True, slots=True, eq=False)
class SchConditionalLaw:
    """Multivariate Student law of the targets with ``df = k + 1``."""

    df: int
    mu: NDArray[np.float64]
    scale: NDArray[np.float64]
    a: float

    def __post_init__(self) -> None:
        if self.df < 2:
            msg = f"Conditional Student law needs at least 2 degrees of freedom, got {self.df}"
            raise DomainError(msg)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def logpdf(self, u: ArrayLike, /) -> float:
        values = np.atleast_1d(np.asarray(u, dtype=np.float64))
        return float(stats.multivariate_t.logpdf(values, loc=self.mu, shape=self.scale, df=self.df))

    def pdf(self, u: ArrayLike, /) -> float:
        return math.exp(self.logpdf(u))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> NDArray[np.float64]:
        mixing = np.sqrt(rng.chisquare(self.df, size=size) / self.df)
        noise = gaussian_sample(cholesky(self.scale), np.zeros(self.dim), rng, size)
        if size is None:
            return self.mu + noise / mixing
        return self.mu + noise / mixing[:, None]

    def marginal(self, indices: Sequence[int], /) -> SchConditionalLaw:
        idx = np.asarray(indices, dtype=np.intp)
        return SchConditionalLaw(self.df, self.mu[idx], self.scale[np.ix_(idx, idx)], self.a)

    def probability_below(
        self,
        upper: ArrayLike,
        config: QMCSettings | None = None,
        *,
        rng: SeedLike = 0,
    ) -> RectProbEstimate:
        bound = np.asarray(upper, dtype=np.float64)
        return mvt_rect_prob(self.df, self.mu, self.scale, np.full(self.dim, -np.inf), bound, config, rng=rng)


def sch_conditional_law(s: SiteSet, x: SiteSet, z: ArrayLike, model: DependenceModel) -> SchConditionalLaw:
    _require(model, Family.SCHLATHER)
    k = len(x)
    values = _values(z, k, positive=False)
    matrix = covariance_matrix(s.concat(x), model, validate=False)
    a = cholesky(matrix[len(s) :, len(s) :]).quadratic_form(values)

    regression = schur_regression(matrix, k)
    return SchConditionalLaw(k + 1, regression.mean(values), a / (k + 1) * regression.cov, a)


# Dispatch and scenario weights


def log_intensity(x: SiteSet, z: ArrayLike, model: DependenceModel, *, origin: ArrayLike | None = None) -> float:
    if model.is_brown_resnick:
        return br_log_intensity(x, z, model, origin=origin)
    return sch_log_intensity(x, z, model)


def conditional_law(
    s: SiteSet,
    x: SiteSet,
    z: ArrayLike,
    model: DependenceModel,
    *,
    origin: ArrayLike | None = None,
) -> ConditionalLaw:
    if model.is_brown_resnick:
        return br_conditional_law(s, x, z, model, origin=origin)
    return sch_conditional_law(s, x, z, model)


@dataclass(frozen=True, slots=True)
class BlockWeight:
    """``w = λ_block(z_block) · P(U < z_rest)``, kept on the log scale."""

    block: tuple[int, ...]
    log_intensity: float
    probability: RectProbEstimate

    @property
    def log_weight(self) -> float:
        return self.log_intensity + self.probability.log_value

    @property
    def value(self) -> float:
        return math.exp(self.log_weight)

    @property
    def relative_error(self) -> float:
        """Monte Carlo error of the weight relative to its value."""
        if self.probability.value <= 0:
            return math.inf
        return self.probability.std_error / self.probability.value


def block_weight(
    model: DependenceModel,
    x: SiteSet,
    z: ArrayLike,
    block: Sequence[int],
    config: QMCSettings | None = None,
    *,
    origin: ArrayLike | None = None,
    rng: SeedLike = 0,
) -> BlockWeight:
    """Weight of the hitting scenario block made of the (0-based) site indices ``block``."""
    values = np.asarray(z, dtype=np.float64)
    members = tuple(sorted(block))
    if not members or len(set(members)) != len(members) or members[0] < 0 or members[-1] >= len(x):
        msg = f"Invalid block {members} for {len(x)} sites"
        raise DomainError(msg)

    rest = [i for i in range(len(x)) if i not in members]
    o = _origin(x, origin) if model.is_brown_resnick else None
    inside = x.subset(members)
    log_lambda = log_intensity(inside, values[list(members)], model, origin=o)
    if not rest:
        return BlockWeight(members, log_lambda, RectProbEstimate.certain())

    law = conditional_law(x.subset(rest), inside, values[list(members)], model, origin=o)
    return BlockWeight(members, log_lambda, law.probability_below(values[rest], config, rng=rng))


def scenario_weight(
    model: DependenceModel,
    x: SiteSet,
    z: ArrayLike,
    tau: Partition,
    j: int,
    config: QMCSettings | None = None,
    *,
    origin: ArrayLike | None = None,
    rng: SeedLike = 0,
) -> BlockWeight:
    """Weight of block ``j`` (1-based label) of the hitting scenario ``tau``."""
    if not 1 <= j <= tau.size:
        msg = f"Block label {j} outside 1..{tau.size}"
        raise DomainError(msg)
    if tau.k != len(x):
        msg = f"Partition of {tau.k} sites does not match {len(x)} conditioning sites"
        raise DomainError(msg)
    return block_weight(model, x, z, tau.blocks[j - 1], config, origin=origin, rng=rng)
