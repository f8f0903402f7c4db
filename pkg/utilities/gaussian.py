"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg

from .errors import DomainError, SingularCovarianceError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    type RandomStream = np.random.Generator

__all__ = (
    "CholeskyFactor",
    "ConditionalGaussian",
    "cholesky",
    "gaussian_sample",
    "schur_conditional",
    "schur_regression",
)

_SYMMETRY_TOLERANCE = 1e-10


@dataclass(frozen=True, slots=True, eq=False)
class CholeskyFactor:
    """Lower triangular ``L`` with ``Σ = L Lᵀ``."""

    lower: NDArray[np.float64]

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def solve(self, rhs: ArrayLike, /) -> NDArray[np.float64]:
        """Σ⁻¹ rhs."""
        if not self.dim:
            return np.asarray(rhs, dtype=np.float64)
        return linalg.cho_solve((self.lower, True), np.asarray(rhs, dtype=np.float64), check_finite=False)

    def whiten(self, rhs: ArrayLike, /) -> NDArray[np.float64]:
        """L⁻¹ rhs."""
        if not self.dim:
            return np.asarray(rhs, dtype=np.float64)
        return linalg.solve_triangular(self.lower, np.asarray(rhs, dtype=np.float64), lower=True, check_finite=False)

    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.lower))))

    def quadratic_form(self, x: ArrayLike, /) -> float:
        """xᵀ Σ⁻¹ x."""
        white = self.whiten(x)
        return float(white @ white)

    def reconstruct(self) -> NDArray[np.float64]:
        return self.lower @ self.lower.T


def cholesky(matrix: ArrayLike, *, ridge: float = 0.0) -> CholeskyFactor:
    """Factorise a symmetric positive definite matrix.

    ``ridge`` is added to the diagonal first; callers only pass a nonzero value when the
    run configuration explicitly enables regularisation.
    """
    S = np.asarray(matrix, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        msg = f"Expected a square matrix, got shape {S.shape}"
        raise DomainError(msg)
    if not S.size:
        return CholeskyFactor(np.zeros((0, 0)))

    scale = float(np.max(np.abs(S)))
    if not np.all(np.isfinite(S)):
        raise SingularCovarianceError("Covariance matrix has non-finite entries.")
    if np.max(np.abs(S - S.T)) > _SYMMETRY_TOLERANCE * max(scale, 1.0):
        raise DomainError("Covariance matrix is not symmetric.")

    if ridge:
        S = S + ridge * np.eye(S.shape[0])

    try:
        lower = linalg.cholesky(S, lower=True, check_finite=False)
    except linalg.LinAlgError as err:
        msg = f"Covariance matrix of dimension {S.shape[0]} is not positive definite"
        raise SingularCovarianceError(msg) from err

    diagonal = np.diag(lower)
    if np.any(diagonal <= np.sqrt(np.finfo(np.float64).eps * max(scale, 1.0)) * 1e-4):
        msg = f"Covariance matrix of dimension {S.shape[0]} is numerically singular"
        raise SingularCovarianceError(msg)
    return CholeskyFactor(lower)


def gaussian_sample(
    factor: CholeskyFactor,
    mean: ArrayLike,
    rng: RandomStream,
    size: int | None = None,
) -> NDArray[np.float64]:
    """``mean + L ξ`` with ξ standard normal; ``size`` draws come back as rows."""
    mu = np.asarray(mean, dtype=np.float64)
    if mu.shape != (factor.dim,):
        msg = f"Mean of shape {mu.shape} does not match a factor of dimension {factor.dim}"
        raise DomainError(msg)

    if size is None:
        return mu + factor.lower @ rng.standard_normal(factor.dim)
    xi = rng.standard_normal((size, factor.dim))
    return mu + xi @ factor.lower.T


@dataclass(frozen=True, slots=True, eq=False)
class ConditionalGaussian:
    """Kriging weights and residual covariance of the leading block given the trailing ``k`` coordinates."""

    weights: NDArray[np.float64]
    cov: NDArray[np.float64]

    def mean(self, z: ArrayLike, /) -> NDArray[np.float64]:
        return self.weights @ np.asarray(z, dtype=np.float64)


def schur_regression(matrix: ArrayLike, k: int, *, ridge: float = 0.0) -> ConditionalGaussian:
    S = np.asarray(matrix, dtype=np.float64)
    n = S.shape[0]
    if not 0 <= k <= n:
        msg = f"Cannot condition on {k} of {n} coordinates"
        raise DomainError(msg)

    m = n - k
    if k == 0:
        return ConditionalGaussian(np.zeros((m, 0)), S.copy())

    S_s, S_sx, S_x = S[:m, :m], S[:m, m:], S[m:, m:]
    factor = cholesky(S_x, ridge=ridge)
    weights = factor.solve(S_sx.T).T
    cov = S_s - weights @ S_sx.T
    return ConditionalGaussian(weights, (cov + cov.T) / 2.0)


def schur_conditional(
    matrix: ArrayLike,
    k: int,
    z: ArrayLike,
    *,
    ridge: float = 0.0,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Mean and covariance of the first ``n - k`` coordinates given the last ``k`` equal ``z``.

    The conditioning block is the trailing ``k × k`` block of ``matrix``.
    """
    conditional = schur_regression(matrix, k, ridge=ridge)
    values = np.asarray(z, dtype=np.float64)
    if values.shape != (k,):
        msg = f"Conditioning vector has shape {values.shape}, expected ({k},)"
        raise DomainError(msg)
    return conditional.mean(values), conditional.cov
