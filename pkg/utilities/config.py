"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import logging
import math
import os
import pathlib
import tomllib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
import orjson

from .errors import ConfigurationError, DomainError
from .formats import DEFAULT_QUANTILES, from_json, read_conditioning, read_sites
from .geometry import DependenceModel, SiteSet, practical_range
from .margins import MarginScale, MarginSpec, TrendSurface
from .partitions import ChainSettings
from .rectangle import QMCSettings
from .simulation import ConditioningSet, SimulationConfig, TruncationPolicy

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping

    from numpy.typing import NDArray

    from ._types.config import GridConfig, ModelConfig, RootConfig, SiteFileConfig

__all__ = (
    "CONFIG_PATH",
    "ExtcoefSettings",
    "GridSpec",
    "RunConfig",
    "SiteSource",
    "load_config",
    "parse_config",
    "read_config_file",
)

LOGGER = logging.getLogger(__name__)

CONFIG_PATH = pathlib.Path("configs/maxcond.toml")
DEFAULT_OUTPUT = pathlib.Path("results")
# the square of side 100√2 sampled on a 50 x 50 grid
DEFAULT_GRID_SIDE = 100.0 * math.sqrt(2.0)
DEFAULT_GRID_SHAPE = (50, 50)


@dataclass(frozen=True, slots=True)
class SiteSource:
    path: pathlib.Path
    label: str = "label"
    coordinates: tuple[str, ...] | None = None
    covariates: tuple[str, ...] = ()

    def sites(self) -> SiteSet:
        return read_sites(self.path, label=self.label, coordinates=self.coordinates, covariates=self.covariates)

    def conditioning(self) -> tuple[SiteSet, NDArray[np.float64]]:
        return read_conditioning(self.path, label=self.label, coordinates=self.coordinates, covariates=self.covariates)


@dataclass(frozen=True, slots=True)
class GridSpec:
    """Target sites: an explicit site file, or a regular grid over a box."""

    source: SiteSource | None = None
    lower: tuple[float, ...] = (0.0, 0.0)
    upper: tuple[float, ...] = (DEFAULT_GRID_SIDE, DEFAULT_GRID_SIDE)
    shape: tuple[int, ...] = DEFAULT_GRID_SHAPE

    def sites(self) -> SiteSet:
        if self.source is not None:
            return self.source.sites()
        try:
            grid = SiteSet.grid(self.lower, self.upper, self.shape)
        except DomainError as err:
            raise ConfigurationError(str(err), field="grid") from err
        return grid


@dataclass(frozen=True, slots=True)
class ExtcoefSettings:
    max_distance: float | None = None
    points: int = 41
    level: float = 1.7
    simulate: int = 0

    def __post_init__(self) -> None:
        if self.points < 2:
            raise ConfigurationError("The distance grid needs at least two points.", field="extcoef.points")
        if self.max_distance is not None and self.max_distance <= 0:
            raise ConfigurationError("Maximum distance must be positive.", field="extcoef.max_distance")
        if self.simulate < 0:
            raise ConfigurationError("Simulation count cannot be negative.", field="extcoef.simulate")

    def distances(self, model: DependenceModel) -> NDArray[np.float64]:
        """Evenly spaced distances from 0, by default up to twice the practical range."""
        upper = self.max_distance
        if upper is None:
            try:
                upper = 2.0 * practical_range(model, self.level)
            except DomainError:
                upper = 4.0 * model.lambda_
        return np.linspace(0.0, upper, self.points)


@dataclass(frozen=True, slots=True)
class RunConfig:
    model: DependenceModel
    simulation: SimulationConfig
    replicates: int = 1
    margins: MarginSpec = field(default_factory=MarginSpec)
    output: pathlib.Path = DEFAULT_OUTPUT
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    workers: int = 4
    conditioning: SiteSource | None = None
    grid: GridSpec = field(default_factory=GridSpec)
    extcoef: ExtcoefSettings = field(default_factory=ExtcoefSettings)
    source: pathlib.Path | None = None

    def __post_init__(self) -> None:
        if self.replicates < 1:
            msg = f"At least one replicate is required, got {self.replicates}"
            raise ConfigurationError(msg, path=self._where, field="replicates")
        if self.workers < 1:
            raise ConfigurationError("Worker count must be positive.", path=self._where, field="output.workers")
        if not self.quantiles or any(not 0 <= p <= 1 for p in self.quantiles):
            raise ConfigurationError("Quantile levels must lie in [0, 1].", path=self._where, field="output.quantiles")

    @property
    def _where(self) -> str | None:
        return str(self.source) if self.source else None

    @property
    def seed(self) -> int:
        return self.simulation.seed

    def targets(self) -> SiteSet:
        sites = self.grid.sites()
        if not len(sites):
            raise ConfigurationError("The target grid is empty.", path=self._where, field="grid")
        return sites

    def conditioning_set(self) -> ConditioningSet:
        """The conditioning data on the unit Fréchet scale."""
        if self.conditioning is None:
            raise ConfigurationError("This command needs conditioning data.", path=self._where, field="conditioning")
        sites, values = self.conditioning.conditioning()
        try:
            z = self.margins.to_frechet(values, sites)
            return ConditioningSet(sites, z)
        except DomainError as err:
            msg = f"Conditioning values are invalid on the {self.margins.scale} scale: {err}"
            raise ConfigurationError(msg, path=str(self.conditioning.path), field="value") from err


def _build[T](factory: Callable[..., T], section: str, values: Mapping[str, Any], *, path: str | None) -> T:
    try:
        return factory(**values)
    except TypeError as err:
        msg = f"Invalid settings in section {section!r}: {err}"
        raise ConfigurationError(msg, path=path, field=section) from err
    except ConfigurationError as err:
        raise ConfigurationError(err.message, path=path, field=err.field or section) from err
    except DomainError as err:
        raise ConfigurationError(str(err), path=path, field=section) from err


def read_config_file(path: pathlib.Path) -> RootConfig:
    try:
        text = path.read_bytes()
    except FileNotFoundError:
        raise ConfigurationError("Config file does not exist.", path=str(path)) from None

    try:
        match path.suffix.lower():
            case ".json":
                raw = from_json(text)
            case ".toml":
                raw = tomllib.loads(text.decode("utf-8"))
            case _:
                raise ConfigurationError("Config files must be .json or .toml.", path=str(path))
    except (orjson.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as err:
        msg = f"Could not parse config: {err}"
        raise ConfigurationError(msg, path=str(path)) from err

    if not isinstance(raw, dict):
        raise ConfigurationError("Config root must be a table.", path=str(path))
    return raw  # pyright: ignore[reportReturnType] # validated field by field in parse_config


def _model(raw: ModelConfig, *, path: str | None) -> DependenceModel:
    if "preset" in raw:
        if len(raw) > 1:
            raise ConfigurationError("A model preset cannot be combined with explicit parameters.", path=path, field="model")
        return _build(DependenceModel.preset, "model", {"name": raw["preset"]}, path=path)
    try:
        values = {"family": raw["family"], "lambda_": float(raw["range"]), "kappa": float(raw["shape"])}
    except KeyError as err:
        msg = f"Model needs a preset or family, range and shape; missing {err.args[0]!r}"
        raise ConfigurationError(msg, path=path, field="model") from None
    return _build(DependenceModel, "model", values, path=path)


def _site_source(raw: SiteFileConfig | GridConfig, base: pathlib.Path) -> SiteSource:
    coordinates = raw.get("coordinates")
    return SiteSource(
        base / raw["path"],  # pyright: ignore[reportTypedDictNotRequiredAccess] # checked by callers
        raw.get("label", "label"),
        tuple(coordinates) if coordinates is not None else None,
        tuple(raw.get("covariates", ())),
    )


def _grid(raw: GridConfig | None, base: pathlib.Path, *, path: str | None) -> GridSpec:
    if not raw:
        return GridSpec()
    if "path" in raw:
        return GridSpec(source=_site_source(raw, base))
    values = {key: tuple(raw[key]) for key in ("lower", "upper", "shape") if key in raw}  # pyright: ignore[reportGeneralTypeIssues]
    return _build(GridSpec, "grid", values, path=path)


def _margins(raw: Mapping[str, Any] | None, *, path: str | None) -> MarginSpec:
    if not raw:
        return MarginSpec()
    try:
        scale = MarginScale(str(raw.get("scale", "frechet")).lower())
    except ValueError:
        msg = f"Unknown margin scale {raw.get('scale')!r}, expected one of {[s.value for s in MarginScale]}"
        raise ConfigurationError(msg, path=path, field="margins.scale") from None
    trend = _build(TrendSurface, "margins.trend", raw["trend"], path=path) if "trend" in raw else None
    return _build(MarginSpec, "margins", {"scale": scale, "trend": trend}, path=path)


def parse_config(
    raw: RootConfig,
    *,
    base: pathlib.Path | None = None,
    source: pathlib.Path | None = None,
    seed: int | None = None,
    out: pathlib.Path | None = None,
    replicates: int | None = None,
) -> RunConfig:
    """Build a :class:`RunConfig`; keyword overrides win over the file and relative paths resolve against ``base``."""
    base = base or pathlib.Path()
    where = str(source) if source else None
    if "model" not in raw:
        raise ConfigurationError("Config needs a [model] section.", path=where, field="model")

    seed = seed if seed is not None else raw.get("seed")
    if seed is None:
        raise ConfigurationError("A seed is required, set 'seed' in the config or pass --seed.", path=where, field="seed")

    chain = dict(raw.get("chain", {}))
    exact_k_threshold = chain.pop("exact_k_threshold", 5)
    truncation = dict(raw.get("truncation", {}))
    rejection_cap = truncation.pop("rejection_cap", 1_000_000)

    simulation = _build(
        SimulationConfig,
        "simulation",
        {
            "chain": _build(ChainSettings, "chain", chain, path=where),
            "qmc": _build(QMCSettings, "qmc", raw.get("qmc", {}), path=where),
            "truncation": _build(TruncationPolicy, "truncation", truncation, path=where),
            "exact_k_threshold": int(exact_k_threshold),
            "rejection_cap": int(rejection_cap),
            "seed": int(seed),
            "ridge": float(raw.get("ridge", 0.0)),
        },
        path=where,
    )

    output = raw.get("output", {})
    if out is not None:
        directory = out
    elif "directory" in output:
        directory = base / output["directory"]
    else:
        directory = DEFAULT_OUTPUT

    conditioning = raw.get("conditioning")
    if conditioning is not None and "path" not in conditioning:
        raise ConfigurationError("Conditioning data needs a 'path'.", path=where, field="conditioning.path")

    config = _build(
        RunConfig,
        "run",
        {
            "model": _model(raw["model"], path=where),
            "simulation": simulation,
            "replicates": int(replicates if replicates is not None else raw.get("replicates", 1)),
            "margins": _margins(raw.get("margins"), path=where),
            "output": directory,
            "quantiles": tuple(float(p) for p in output.get("quantiles", DEFAULT_QUANTILES)),
            "workers": int(output.get("workers", min(8, os.cpu_count() or 1))),
            "conditioning": _site_source(conditioning, base) if conditioning else None,
            "grid": _grid(raw.get("grid"), base, path=where),
            "extcoef": _build(ExtcoefSettings, "extcoef", raw.get("extcoef", {}), path=where),
            "source": source,
        },
        path=where,
    )
    LOGGER.info(
        "Configuration %s: %s, seed %d, %d replicate(s), margins %s, output to %s",
        where or "<inline>",
        config.model,
        config.seed,
        config.replicates,
        config.margins.scale,
        config.output,
    )
    return config


def load_config(
    path: pathlib.Path = CONFIG_PATH,
    *,
    seed: int | None = None,
    out: pathlib.Path | None = None,
    replicates: int | None = None,
) -> RunConfig:
    raw = read_config_file(path)
    return parse_config(raw, base=path.parent, source=path, seed=seed, out=out, replicates=replicates)
