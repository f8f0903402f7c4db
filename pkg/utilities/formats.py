"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import itertools
from typing import TYPE_CHECKING, Any

import numpy as np
import orjson
import pandas as pd
from tabulate import tabulate

from .errors import ConfigurationError, DomainError
from .geometry import SiteSet

if TYPE_CHECKING:
    import pathlib
    from collections.abc import Iterable, Mapping, Sequence
    from types import TracebackType
    from typing import Self

    from numpy.typing import ArrayLike, NDArray

__all__ = (
    "DEFAULT_QUANTILES",
    "QuantileTable",
    "ReplicateWriter",
    "TabularData",
    "from_json",
    "pointwise_quantiles",
    "read_conditioning",
    "read_frame",
    "read_quantiles",
    "read_replicates",
    "read_sites",
    "read_table",
    "to_json",
    "write_conditioning",
    "write_quantiles",
    "write_sites",
    "write_table",
)

DEFAULT_QUANTILES: tuple[float, ...] = (0.025, 0.5, 0.975)
QUANTILE_METHOD = "hazen"
REPLICATE_COLUMNS = ("replicate", "label", "value")
_RESERVED = frozenset({"label", "value"})


def to_json(obj: Any, /) -> str:
    return orjson.dumps(obj, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY).decode("utf-8")


def from_json(obj: str | bytes, /) -> Any:
    return orjson.loads(obj)


def _write_comment(fp: Any, comment: str | None) -> None:
    if comment:
        for line in comment.splitlines():
            fp.write(f"# {line}\n")


def write_table(
    path: pathlib.Path,
    headers: Sequence[str],
    rows: Iterable[Sequence[object]],
    *,
    comment: str | None = None,
) -> None:
    """Plain CSV with optional ``#`` comment lines above the header.

    Floats are written with their shortest round-tripping representation.
    """
    _write_frame(path, pd.DataFrame([list(row) for row in rows], columns=list(headers)), comment=comment)


def _write_frame(path: pathlib.Path, frame: pd.DataFrame, *, comment: str | None = None) -> None:
    with path.open("w", encoding="utf-8", newline="") as fp:
        _write_comment(fp, comment)
        frame.to_csv(fp, index=False, lineterminator="\n")


def _leading_comments(path: pathlib.Path) -> list[str]:
    with path.open(encoding="utf-8") as fp:
        return [line[1:].strip() for line in itertools.takewhile(lambda line: line.startswith("#"), fp)]


def read_frame(path: pathlib.Path, /, **kwargs: Any) -> tuple[list[str], pd.DataFrame]:
    """The ``#`` comment lines above the header and the table itself.

    Keyword arguments go to :func:`pandas.read_csv`.
    """
    try:
        comments = _leading_comments(path)
        frame = pd.read_csv(path, comment="#", skipinitialspace=True, float_precision="round_trip", **kwargs)
    except FileNotFoundError:
        raise ConfigurationError("CSV file does not exist.", path=str(path)) from None
    except pd.errors.EmptyDataError:
        raise ConfigurationError("CSV file is empty, a header row is required.", path=str(path)) from None
    except pd.errors.ParserError as err:
        msg = f"Could not parse CSV: {err}"
        raise ConfigurationError(msg, path=str(path)) from None

    frame.columns = [str(name).strip() for name in frame.columns]
    return comments, frame


def read_table(path: pathlib.Path) -> tuple[list[str], list[list[str]]]:
    """Header and rows as the strings in the file."""
    _, frame = read_frame(path, dtype=str, keep_default_na=False)
    return list(frame.columns), frame.to_numpy().tolist()


def _declared_coordinates(comments: Sequence[str]) -> list[str] | None:
    for line in comments:
        key, _, value = line.partition(":")
        if key.strip() == "coordinates":
            return [name.strip() for name in value.split(",") if name.strip()]
    return None


def _site_frame(
    path: pathlib.Path,
    frame: pd.DataFrame,
    *,
    label: str,
    coordinates: Sequence[str] | None,
    covariates: Sequence[str],
) -> SiteSet:
    candidates = frame.drop(columns=[name for name in frame.columns if name in _RESERVED or name == label])
    numeric = {
        str(name): column.to_numpy(dtype=np.float64) for name, column in candidates.select_dtypes("number").items()
    }

    if coordinates is None:
        coordinates = [name for name in numeric if name not in covariates]
    missing = [name for name in (*coordinates, *covariates) if name not in numeric]
    if missing:
        msg = f"Missing or non-numeric site columns {missing}, numeric columns are {sorted(numeric)}"
        raise ConfigurationError(msg, path=str(path), field="coordinates")
    if not coordinates:
        raise ConfigurationError("No coordinate columns found.", path=str(path), field="coordinates")

    coords = frame[list(coordinates)].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(coords)):
        raise ConfigurationError("Site coordinates must be finite numbers.", path=str(path), field="coordinates")
    labels = tuple(frame[label].astype(str)) if label in frame.columns else ()
    return SiteSet(coords, labels, numeric)


def _read_site_frame(path: pathlib.Path, label: str) -> tuple[list[str], pd.DataFrame]:
    comments, frame = read_frame(path, dtype={label: str})
    if frame.empty:
        raise ConfigurationError("Site file has no rows.", path=str(path))
    return comments, frame


def read_sites(
    path: pathlib.Path,
    *,
    label: str = "label",
    coordinates: Sequence[str] | None = None,
    covariates: Sequence[str] = (),
) -> SiteSet:
    """Sites from a CSV with a header row.

    Without an explicit ``coordinates`` list every numeric column that is neither the label,
    ``value`` nor a declared covariate is a coordinate, unless the file names its coordinate columns
    in a ``# coordinates: ...`` comment. All numeric columns are kept as covariates.
    """
    comments, frame = _read_site_frame(path, label)
    coordinates = coordinates or _declared_coordinates(comments)
    return _site_frame(path, frame, label=label, coordinates=coordinates, covariates=covariates)


def read_conditioning(
    path: pathlib.Path,
    *,
    label: str = "label",
    coordinates: Sequence[str] | None = None,
    covariates: Sequence[str] = (),
) -> tuple[SiteSet, NDArray[np.float64]]:
    """Conditioning sites and their observed values, on whatever scale the file uses."""
    comments, frame = read_frame(path, dtype={label: str})
    if "value" not in frame.columns:
        raise ConfigurationError("Conditioning data needs a 'value' column.", path=str(path), field="value")
    if frame.empty:
        raise ConfigurationError("Conditioning data has no rows.", path=str(path))

    values = pd.to_numeric(frame["value"], errors="coerce").to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ConfigurationError("Conditioning values must be finite numbers.", path=str(path), field="value")
    coordinates = coordinates or _declared_coordinates(comments)
    sites = _site_frame(path, frame, label=label, coordinates=coordinates, covariates=covariates)
    return sites, values


def _site_headers(sites: SiteSet) -> tuple[list[str], list[str]]:
    """Coordinate column names (a covariate equal to the coordinate keeps its name) and the other covariates."""
    coordinates: list[str] = []
    for i in range(sites.dim):
        name = next(
            (
                name
                for name, values in sites.covariates.items()
                if name not in coordinates and np.array_equal(values, sites.coords[:, i])
            ),
            f"coord{i + 1}",
        )
        coordinates.append(name)
    extra = [name for name in sites.covariates if name not in coordinates]
    return coordinates, extra


def _sites_to_frame(sites: SiteSet) -> tuple[list[str], pd.DataFrame]:
    coordinates, extra = _site_headers(sites)
    frame = pd.DataFrame(sites.coords, columns=coordinates)
    frame.insert(0, "label", list(sites.labels))
    for name in extra:
        frame[name] = sites.covariates[name]
    return coordinates, frame


def write_sites(path: pathlib.Path, sites: SiteSet) -> None:
    coordinates, frame = _sites_to_frame(sites)
    _write_frame(path, frame, comment=f"coordinates: {', '.join(coordinates)}")


def write_conditioning(path: pathlib.Path, sites: SiteSet, values: ArrayLike) -> None:
    coordinates, frame = _sites_to_frame(sites)
    frame["value"] = np.asarray(values, dtype=np.float64)
    _write_frame(path, frame, comment=f"coordinates: {', '.join(coordinates)}")


def pointwise_quantiles(
    samples: ArrayLike,
    probabilities: Sequence[float] = DEFAULT_QUANTILES,
) -> NDArray[np.float64]:
    """``(len(probabilities), n_sites)`` sample quantiles over the replicate axis."""
    arr = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if not arr.shape[0]:
        raise DomainError("Quantiles need at least one replicate.")
    if any(not 0 <= p <= 1 for p in probabilities):
        raise DomainError("Quantile levels must lie in [0, 1].")
    return np.quantile(arr, list(probabilities), axis=0, method=QUANTILE_METHOD)


def _quantile_header(p: float) -> str:
    return f"q{p:g}"


class QuantileTable:
    """Pointwise quantiles at a set of sites, optionally with extra per-site columns."""

    __slots__ = ("coords", "columns", "probabilities")

    def __init__(
        self,
        coords: NDArray[np.float64],
        probabilities: Sequence[float],
        columns: Mapping[str, NDArray[np.float64]],
    ) -> None:
        self.coords: NDArray[np.float64] = coords
        self.probabilities: tuple[float, ...] = tuple(probabilities)
        self.columns: dict[str, NDArray[np.float64]] = dict(columns)

    def __getitem__(self, p: float) -> NDArray[np.float64]:
        return self.columns[_quantile_header(p)]


def write_quantiles(
    path: pathlib.Path,
    sites: SiteSet,
    quantiles: NDArray[np.float64],
    probabilities: Sequence[float] = DEFAULT_QUANTILES,
    *,
    n_replicates: int,
    extra: Mapping[str, NDArray[np.float64]] | None = None,
) -> None:
    frame = pd.DataFrame(sites.coords, columns=[f"coord{i + 1}" for i in range(sites.dim)])
    for p, row in zip(probabilities, quantiles, strict=True):
        frame[_quantile_header(p)] = row
    for name, column in (extra or {}).items():
        frame[name] = column
    comment = (
        f"pointwise quantiles over {n_replicates} replicates\n"
        f"method: {QUANTILE_METHOD} (inclusive midpoint, p-th quantile at position n*p + 1/2)"
    )
    _write_frame(path, frame, comment=comment)


def read_quantiles(path: pathlib.Path) -> QuantileTable:
    _, frame = read_frame(path)
    coordinates = [name for name in frame.columns if name.startswith("coord")]
    probabilities = [float(name[1:]) for name in frame.columns if name.startswith("q")]
    coords = frame[coordinates].to_numpy(dtype=np.float64)
    columns = {
        str(name): column.to_numpy(dtype=np.float64) for name, column in frame.drop(columns=coordinates).items()
    }
    return QuantileTable(coords, probabilities, columns)


class ReplicateWriter:
    """Streams long format rows ``replicate, label, value`` in replicate order."""

    def __init__(self, path: pathlib.Path, labels: Sequence[str]) -> None:
        self.path: pathlib.Path = path
        self.labels: tuple[str, ...] = tuple(labels)
        self.written: int = 0
        self._fp = path.open("w", encoding="utf-8", newline="")
        self._fp.write(",".join(REPLICATE_COLUMNS) + "\n")

    def __enter__(self) -> Self:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc_value: BaseException | None,
        traceback: TracebackType | None,
    ) -> None:
        self.close()

    def write(self, replicate: int, values: ArrayLike) -> None:
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (len(self.labels),):
            msg = f"Replicate {replicate} has {arr.shape} values for {len(self.labels)} sites"
            raise DomainError(msg)
        frame = pd.DataFrame({"replicate": replicate, "label": list(self.labels), "value": arr})
        frame.to_csv(self._fp, header=False, index=False, lineterminator="\n")
        self.written += 1

    def close(self) -> None:
        if not self._fp.closed:
            self._fp.close()


def read_replicates(path: pathlib.Path) -> tuple[tuple[str, ...], NDArray[np.float64]]:
    """Labels in file order and a ``(n_replicates, n_sites)`` value matrix."""
    _, frame = read_frame(path, dtype={"label": str})
    if tuple(frame.columns) != REPLICATE_COLUMNS:
        raise ConfigurationError("Not a replicate file.", path=str(path))

    labels = tuple(frame["label"].drop_duplicates())
    wide = frame.pivot(index="replicate", columns="label", values="value").sort_index()
    return labels, wide.reindex(columns=list(labels)).to_numpy(dtype=np.float64)


class TabularData:
    """Console rendering of small result tables."""

    def __init__(self) -> None:
        self._columns: list[str] = []
        self._rows: list[list[object]] = []

    def set_columns(self, columns: Sequence[str]) -> None:
        self._columns = list(columns)

    def add_row(self, row: Iterable[object]) -> None:
        self._rows.append(list(row))

    def add_rows(self, rows: Iterable[Iterable[object]]) -> None:
        for row in rows:
            self.add_row(row)

    def render(self, *, floatfmt: str = ".4f") -> str:
        return tabulate(self._rows, headers=self._columns, tablefmt="simple", floatfmt=floatfmt)
