from __future__ import annotations

from typing import TYPE_CHECKING, TypedDict

if TYPE_CHECKING:
    from typing import NotRequired, Required

__all__ = ("RootConfig",)


class ModelConfig(TypedDict, total=False):
    preset: str
    family: str
    range: float
    shape: float


class SiteFileConfig(TypedDict, total=False):
    path: Required[str]
    label: str
    coordinates: list[str]
    covariates: list[str]


class GridConfig(TypedDict, total=False):
    path: str
    label: str
    coordinates: list[str]
    covariates: list[str]
    lower: list[float]
    upper: list[float]
    shape: list[int]


class TrendConfig(TypedDict, total=False):
    location: dict[str, float]
    scale: dict[str, float]
    shape: dict[str, float]


class MarginsConfig(TypedDict):
    scale: str
    trend: NotRequired[TrendConfig]


class ChainConfig(TypedDict, total=False):
    length: int
    burn_in: int
    thinning: int
    exact_k_threshold: int


class QMCConfig(TypedDict, total=False):
    n_points: int
    n_shifts: int
    max_dim: int
    antithetic: bool


class TruncationConfig(TypedDict, total=False):
    q_brown_resnick: float
    q_schlather: float
    max_atoms: int
    batch_size: int
    rejection_cap: int


class OutputConfig(TypedDict, total=False):
    directory: str
    quantiles: list[float]
    workers: int


class ExtcoefConfig(TypedDict, total=False):
    max_distance: float
    points: int
    level: float
    simulate: int


class RootConfig(TypedDict, total=False):
    model: Required[ModelConfig]
    seed: int
    replicates: int
    ridge: float
    conditioning: SiteFileConfig
    grid: GridConfig
    margins: MarginsConfig
    chain: ChainConfig
    qmc: QMCConfig
    truncation: TruncationConfig
    output: OutputConfig
    extcoef: ExtcoefConfig
