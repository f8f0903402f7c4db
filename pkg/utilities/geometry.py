"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, ClassVar, overload

import numpy as np
from scipy import optimize, special
from scipy.spatial.distance import cdist, pdist

from .errors import ConfigurationError, DomainError, FamilyMismatchError, SingularCovarianceError
from .gaussian import cholesky

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping, Sequence
    from typing import Self

    from numpy.typing import ArrayLike, NDArray

__all__ = (
    "DependenceModel",
    "Family",
    "SiteSet",
    "correlation",
    "covariance_matrix",
    "empirical_extremal_coefficient",
    "extremal_coefficient",
    "origin_semivariogram",
    "practical_range",
    "resolve_origin",
    "semivariogram",
)

LOGGER = logging.getLogger(__name__)

DUPLICATE_EPSILON = 1e-8
_SCHLATHER_THETA_LIMIT = 1.0 + np.sqrt(0.5)


class Family(enum.StrEnum):
    BROWN_RESNICK = "brown-resnick"
    SCHLATHER = "schlather"

    @classmethod
    def parse(cls, value: str | Family, /) -> Family:
        if isinstance(value, Family):
            return value

        key = value.strip().lower().replace("_", "-").replace(" ", "-")
        aliases = {
            "br": cls.BROWN_RESNICK,
            "brown-resnick": cls.BROWN_RESNICK,
            "brownresnick": cls.BROWN_RESNICK,
            "sch": cls.SCHLATHER,
            "schlather": cls.SCHLATHER,
        }
        try:
            return aliases[key]
        except KeyError:
            msg = f"Unknown model family {value!r}, expected one of {sorted(aliases)}"
            raise ConfigurationError(msg, field="model.family") from None


@dataclass(frozen=True, slots=True)
class DependenceModel:
    """A max-stable model with a power (Brown–Resnick) or powered exponential (Schlather) dependence function."""

    family: Family
    lambda_: float
    kappa: float

    PRESETS: ClassVar[dict[str, tuple[Family, float, float]]] = {
        "br-very-wiggly": (Family.BROWN_RESNICK, 25.0, 0.5),
        "br-wiggly": (Family.BROWN_RESNICK, 54.0, 1.0),
        "br-smooth": (Family.BROWN_RESNICK, 69.0, 1.5),
        "sch-very-wiggly": (Family.SCHLATHER, 208.0, 0.5),
        "sch-wiggly": (Family.SCHLATHER, 144.0, 1.0),
        "sch-smooth": (Family.SCHLATHER, 128.0, 1.5),
    }

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        if not np.isfinite(self.lambda_) or self.lambda_ <= 0:
            msg = f"Range parameter must be positive, got {self.lambda_!r}"
            raise DomainError(msg)
        if not 0 < self.kappa <= 2:
            msg = f"Shape parameter must lie in (0, 2], got {self.kappa!r}"
            raise DomainError(msg)

    def __str__(self) -> str:
        return f"{self.family.value}(lambda={self.lambda_:g}, kappa={self.kappa:g})"

    @classmethod
    def brown_resnick(cls, lambda_: float, kappa: float) -> Self:
        return cls(Family.BROWN_RESNICK, lambda_, kappa)

    @classmethod
    def schlather(cls, lambda_: float, kappa: float) -> Self:
        return cls(Family.SCHLATHER, lambda_, kappa)

    @classmethod
    def preset(cls, name: str) -> Self:
        try:
            family, lambda_, kappa = cls.PRESETS[name]
        except KeyError:
            msg = f"Unknown model preset {name!r}, expected one of {sorted(cls.PRESETS)}"
            raise ConfigurationError(msg, field="model.preset") from None
        return cls(family, lambda_, kappa)

    @property
    def is_brown_resnick(self) -> bool:
        return self.family is Family.BROWN_RESNICK


@dataclass(frozen=True, slots=True, eq=False)
class SiteSet:
    """Sites in R^d with labels and named covariates.

    One dimensional input (``[25.0, 50.0]``) is read as sites on a line.
    Covariates always include the coordinate columns under their names.
    """

    coords: NDArray[np.float64]
    labels: tuple[str, ...] = ()
    covariates: Mapping[str, NDArray[np.float64]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords.reshape(-1, 1)
        if coords.ndim != 2:
            msg = f"Coordinates must be a (n, d) array, got shape {coords.shape}"
            raise DomainError(msg)
        if not np.all(np.isfinite(coords)):
            raise DomainError("Site coordinates must be finite.")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

        labels = tuple(self.labels) or tuple(f"s{i + 1}" for i in range(coords.shape[0]))
        if len(labels) != coords.shape[0]:
            msg = f"Got {len(labels)} labels for {coords.shape[0]} sites"
            raise DomainError(msg)
        object.__setattr__(self, "labels", labels)

        covariates = {name: np.asarray(values, dtype=np.float64) for name, values in self.covariates.items()}
        if not covariates:
            covariates = {f"coord{i + 1}": coords[:, i] for i in range(coords.shape[1])}
        object.__setattr__(self, "covariates", covariates)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __repr__(self) -> str:
        return f"<SiteSet n={len(self)} d={self.dim}>"

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @classmethod
    def grid(cls, lower: Sequence[float], upper: Sequence[float], shape: Sequence[int]) -> Self:
        """A regular grid, first axis varying slowest."""
        if not (len(lower) == len(upper) == len(shape)):
            raise DomainError("Grid bounds and shape must have the same dimension.")
        if any(n < 1 for n in shape):
            raise DomainError("Grid must have at least one node per axis.")

        axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(lower, upper, shape, strict=True)]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.column_stack([m.ravel() for m in mesh])
        labels = tuple(f"g{i + 1}" for i in range(coords.shape[0]))
        return cls(coords, labels)

    def subset(self, indices: Iterable[int] | NDArray[np.intp], /) -> SiteSet:
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=np.intp)
        return SiteSet(
            self.coords[idx],
            tuple(self.labels[i] for i in idx),
            {name: values[idx] for name, values in self.covariates.items()},
        )

    def concat(self, other: SiteSet, /) -> SiteSet:
        if not len(other):
            return self
        if not len(self):
            return other
        if other.dim != self.dim:
            msg = f"Cannot join {self.dim}-d and {other.dim}-d site sets"
            raise DomainError(msg)
        shared = self.covariates.keys() & other.covariates.keys()
        return SiteSet(
            np.vstack([self.coords, other.coords]),
            self.labels + other.labels,
            {name: np.concatenate([self.covariates[name], other.covariates[name]]) for name in shared},
        )

    def distances(self, other: SiteSet | None = None, /) -> NDArray[np.float64]:
        other = self if other is None else other
        if not len(self) or not len(other):
            return np.zeros((len(self), len(other)))
        return cdist(self.coords, other.coords)

    def centroid(self) -> NDArray[np.float64]:
        return self.coords.mean(axis=0)

    def min_spacing(self) -> float:
        if len(self) < 2:
            return float("inf")
        return float(pdist(self.coords).min())


def _check_family(model: DependenceModel, family: Family, /) -> None:
    if model.family is not family:
        raise FamilyMismatchError(family, model.family)


def _as_distance(h: ArrayLike, /) -> NDArray[np.float64]:
    arr = np.asarray(h, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("Distances must be nonnegative.")
    return arr


@overload
def semivariogram(h: float, model: DependenceModel) -> float: ...


@overload
def semivariogram(h: NDArray[np.float64], model: DependenceModel) -> NDArray[np.float64]: ...


def semivariogram(h: ArrayLike, model: DependenceModel) -> float | NDArray[np.float64]:
    _check_family(model, Family.BROWN_RESNICK)
    arr = _as_distance(h)
    out = (arr / model.lambda_) ** model.kappa
    return out if arr.ndim else float(out)


@overload
def correlation(h: float, model: DependenceModel) -> float: ...


@overload
def correlation(h: NDArray[np.float64], model: DependenceModel) -> NDArray[np.float64]: ...


def correlation(h: ArrayLike, model: DependenceModel) -> float | NDArray[np.float64]:
    _check_family(model, Family.SCHLATHER)
    arr = _as_distance(h)
    out = np.exp(-((arr / model.lambda_) ** model.kappa))
    return out if arr.ndim else float(out)


def origin_semivariogram(
    sites: SiteSet,
    model: DependenceModel,
    *,
    origin: ArrayLike | None = None,
) -> NDArray[np.float64]:
    """γ(x - o) for every site, the drift of the Brown–Resnick spectral function."""
    o = np.zeros(sites.dim) if origin is None else np.asarray(origin, dtype=np.float64)
    return semivariogram(np.linalg.norm(sites.coords - o, axis=1), model)


def covariance_matrix(
    sites: SiteSet,
    model: DependenceModel,
    *,
    origin: ArrayLike | None = None,
    epsilon: float = DUPLICATE_EPSILON,
    validate: bool = True,
) -> NDArray[np.float64]:
    """Covariance of W(x) (Brown–Resnick, W(o) = 0) or ε(x) (Schlather) over ``sites``.

    ``origin`` defaults to the coordinate origin. Sites closer than ``epsilon`` to each other,
    or (Brown–Resnick) to the origin, make the matrix singular and are rejected.
    """
    n = len(sites)
    if not n:
        return np.zeros((0, 0))

    if n > 1:
        if pdist(sites.coords).min() < epsilon:
            spread = sites.distances()
            np.fill_diagonal(spread, np.inf)
            i, j = np.unravel_index(int(np.argmin(spread)), spread.shape)
            msg = f"Sites {sites.labels[i]!r} and {sites.labels[j]!r} are closer than {epsilon:g}"
            raise SingularCovarianceError(msg)

    distances = sites.distances()
    if model.is_brown_resnick:
        o = np.zeros(sites.dim) if origin is None else np.asarray(origin, dtype=np.float64)
        to_origin = np.linalg.norm(sites.coords - o, axis=1)
        if np.any(to_origin < epsilon):
            label = sites.labels[int(np.argmin(to_origin))]
            msg = f"Site {label!r} coincides with the variogram origin, W is degenerate there"
            raise SingularCovarianceError(msg)
        g = semivariogram(to_origin, model)
        matrix = g[:, None] + g[None, :] - semivariogram(distances, model)
    else:
        matrix = correlation(distances, model)

    if validate:
        cholesky(matrix)
    return matrix


def extremal_coefficient(h: ArrayLike, model: DependenceModel) -> float | NDArray[np.float64]:
    arr = _as_distance(h)
    if model.is_brown_resnick:
        out = 2.0 * special.ndtr(np.sqrt(semivariogram(arr, model) / 2.0))
    else:
        out = 1.0 + np.sqrt((1.0 - correlation(arr, model)) / 2.0)
    return out if arr.ndim else float(out)


def practical_range(model: DependenceModel, level: float = 1.7) -> float:
    """The distance at which the extremal coefficient reaches ``level``."""
    ceiling = 2.0 if model.is_brown_resnick else _SCHLATHER_THETA_LIMIT
    if not 1.0 < level < ceiling:
        msg = f"Extremal coefficient level {level} is not attained by {model} (supremum {ceiling:.4f})"
        raise DomainError(msg)

    upper = model.lambda_
    for _ in range(200):
        if extremal_coefficient(upper, model) >= level:
            break
        upper *= 2.0
    else:
        msg = f"Could not bracket the distance where the extremal coefficient of {model} reaches {level}"
        raise DomainError(msg)

    return float(optimize.brentq(lambda h: extremal_coefficient(h, model) - level, 0.0, upper, xtol=1e-10))


def empirical_extremal_coefficient(a: ArrayLike, b: ArrayLike) -> float:
    """Estimate θ from paired unit Fréchet samples; 1/max(a, b) is exponential with rate θ."""
    first = np.asarray(a, dtype=np.float64)
    second = np.asarray(b, dtype=np.float64)
    if first.shape != second.shape or first.size == 0:
        raise DomainError("Need two nonempty samples of equal length.")
    if np.any(first <= 0) or np.any(second <= 0):
        raise DomainError("Extremal coefficient estimation expects positive unit Fréchet values.")
    return float(first.size / np.sum(1.0 / np.maximum(first, second)))


def resolve_origin(sites: SiteSet, *, epsilon: float = DUPLICATE_EPSILON) -> NDArray[np.float64]:
    """A variogram origin close to the centre of ``sites`` but off every site.

    The Brown–Resnick law does not depend on the origin; a central one keeps the spectral
    functions' variances, and hence the simulation envelope, small.
    """
    if not len(sites):
        return np.zeros(max(sites.dim, 1))

    origin = sites.centroid()
    spacing = sites.min_spacing()
    step = 1.0 if not np.isfinite(spacing) else spacing
    direction = np.ones(sites.dim) / np.sqrt(sites.dim)
    for attempt in range(1, 17):
        nearest = float(np.min(np.linalg.norm(sites.coords - origin, axis=1)))
        if nearest >= max(0.25 * step, 10 * epsilon):
            return origin
        origin = sites.centroid() + direction * step * 0.37 / attempt

    LOGGER.warning("Could not move the variogram origin away from the sites; using the centroid.")
    return sites.centroid()
