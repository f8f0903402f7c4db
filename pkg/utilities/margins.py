"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, overload

import numpy as np

from .errors import ConfigurationError, DomainError

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import ArrayLike, NDArray

    from .geometry import SiteSet

__all__ = (
    "GevParams",
    "MarginScale",
    "MarginSpec",
    "TrendSurface",
    "frechet_to_gev",
    "frechet_to_gumbel",
    "gev_to_frechet",
    "gumbel_to_frechet",
    "trend_surface_eval",
    "unconditional_median",
)

GUMBEL_SHAPE_TOLERANCE = 1e-7


@dataclass(frozen=True, slots=True)
class GevParams:
    location: float = 0.0
    scale: float = 1.0
    shape: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.scale) or self.scale <= 0:
            msg = f"GEV scale must be positive, got {self.scale}"
            raise DomainError(msg)

    @property
    def is_gumbel(self) -> bool:
        return abs(self.shape) < GUMBEL_SHAPE_TOLERANCE


@overload
def frechet_to_gumbel(z: float) -> float: ...


@overload
def frechet_to_gumbel(z: NDArray[np.float64]) -> NDArray[np.float64]: ...


def frechet_to_gumbel(z: ArrayLike) -> float | NDArray[np.float64]:
    arr = np.asarray(z, dtype=np.float64)
    if np.any(arr <= 0):
        raise DomainError("Unit Fréchet values must be positive.")
    out = np.log(arr)
    return out if arr.ndim else float(out)


def gumbel_to_frechet(y: ArrayLike) -> float | NDArray[np.float64]:
    arr = np.asarray(y, dtype=np.float64)
    out = np.exp(arr)
    return out if arr.ndim else float(out)


def frechet_to_gev(z: ArrayLike, p: GevParams) -> float | NDArray[np.float64]:
    """``η + σ (z^ξ - 1) / ξ``, with the ``ξ → 0`` limit ``η + σ log z``."""
    arr = np.asarray(z, dtype=np.float64)
    if np.any(arr <= 0):
        raise DomainError("Unit Fréchet values must be positive.")

    logz = np.log(arr)
    if p.is_gumbel:
        out = p.location + p.scale * logz
    else:
        out = p.location + p.scale * np.expm1(p.shape * logz) / p.shape
    return out if arr.ndim else float(out)


def gev_to_frechet(y: ArrayLike, p: GevParams) -> float | NDArray[np.float64]:
    arr = np.asarray(y, dtype=np.float64)
    standard = (arr - p.location) / p.scale
    if p.is_gumbel:
        out = np.exp(standard)
    else:
        t = 1.0 + p.shape * standard
        if np.any(t <= 0):
            msg = f"Value outside the support of GEV({p.location:g}, {p.scale:g}, {p.shape:g})"
            raise DomainError(msg)
        out = np.exp(np.log1p(p.shape * standard) / p.shape)
    return out if arr.ndim else float(out)


def unconditional_median(p: GevParams) -> float:
    return float(frechet_to_gev(1.0 / math.log(2.0), p))


@dataclass(frozen=True, slots=True)
class TrendSurface:
    """Each GEV parameter is linear in named covariates; ``"intercept"`` is the constant term.

    ``{"location": {"intercept": 10.0, "alt": -0.005}, "scale": {"intercept": 2.0}, "shape": {}}``
    """

    location: Mapping[str, float] = field(default_factory=lambda: {"intercept": 0.0})
    scale: Mapping[str, float] = field(default_factory=lambda: {"intercept": 1.0})
    shape: Mapping[str, float] = field(default_factory=lambda: {"intercept": 0.0})

    @property
    def covariates(self) -> frozenset[str]:
        names = {*self.location, *self.scale, *self.shape}
        names.discard("intercept")
        return frozenset(names)


def _linear(coefficients: Mapping[str, float], covariates: Mapping[str, ArrayLike], parameter: str) -> NDArray[np.float64]:
    total = np.asarray(coefficients.get("intercept", 0.0), dtype=np.float64)
    for name, beta in coefficients.items():
        if name == "intercept":
            continue
        try:
            value = covariates[name]
        except KeyError:
            msg = f"Trend surface for {parameter} needs covariate {name!r}, available: {sorted(covariates)}"
            raise ConfigurationError(msg, field=f"margins.{parameter}.{name}") from None
        total = total + beta * np.asarray(value, dtype=np.float64)
    return total


def trend_surface_eval(ts: TrendSurface, covariates: Mapping[str, float]) -> GevParams:
    location = float(_linear(ts.location, covariates, "location"))
    scale = float(_linear(ts.scale, covariates, "scale"))
    shape = float(_linear(ts.shape, covariates, "shape"))
    if scale <= 0:
        msg = f"Trend surface gives a nonpositive GEV scale {scale:g} at {dict(covariates)}"
        raise DomainError(msg)
    return GevParams(location, scale, shape)


class MarginScale(enum.StrEnum):
    FRECHET = "frechet"
    GUMBEL = "gumbel"
    GEV = "gev"


@dataclass(frozen=True, slots=True)
class MarginSpec:
    """The scale data are read and written on; GEV margins come from a trend surface."""

    scale: MarginScale = MarginScale.FRECHET
    trend: TrendSurface | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale", MarginScale(self.scale))
        if self.scale is MarginScale.GEV and self.trend is None:
            raise ConfigurationError("GEV margins need a trend surface.", field="margins.trend")

    def parameters(self, sites: SiteSet) -> list[GevParams]:
        if self.scale is MarginScale.GEV and self.trend is not None:
            return [
                trend_surface_eval(self.trend, {name: float(values[i]) for name, values in sites.covariates.items()})
                for i in range(len(sites))
            ]
        return [GevParams()] * len(sites)

    def to_frechet(self, values: ArrayLike, sites: SiteSet) -> NDArray[np.float64]:
        arr = np.asarray(values, dtype=np.float64)
        match self.scale:
            case MarginScale.FRECHET:
                if np.any(arr <= 0):
                    raise DomainError("Unit Fréchet values must be positive.")
                return arr
            case MarginScale.GUMBEL:
                return np.exp(arr)
            case MarginScale.GEV:
                params = self.parameters(sites)
                return np.array([gev_to_frechet(v, p) for v, p in zip(arr, params, strict=True)])

    def from_frechet(self, values: ArrayLike, sites: SiteSet) -> NDArray[np.float64]:
        """Map unit Fréchet values at ``sites`` (last axis) to this scale."""
        arr = np.asarray(values, dtype=np.float64)
        match self.scale:
            case MarginScale.FRECHET:
                return arr
            case MarginScale.GUMBEL:
                return np.log(arr)
            case MarginScale.GEV:
                params = self.parameters(sites)
                columns = [frechet_to_gev(arr[..., i], p) for i, p in enumerate(params)]
                return np.stack([np.asarray(c) for c in columns], axis=-1)

    def medians(self, sites: SiteSet) -> NDArray[np.float64]:
        """Pointwise median of the unconditional field on this scale."""
        return self.from_frechet(np.full(len(sites), 1.0 / math.log(2.0)), sites)
