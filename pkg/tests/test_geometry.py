from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import linalg

from utilities.errors import ConfigurationError, DomainError, FamilyMismatchError, SingularCovarianceError
from utilities.geometry import (
    DependenceModel,
    Family,
    SiteSet,
    correlation,
    covariance_matrix,
    empirical_extremal_coefficient,
    extremal_coefficient,
    origin_semivariogram,
    practical_range,
    resolve_origin,
    semivariogram,
)

from .conftest import random_sites


@pytest.mark.parametrize(
    "h, lambda_, kappa, expected",
    [
        (0.0, 25.0, 0.5, 0.0),
        (0.0, 54.0, 1.0, 0.0),
        (25.0, 25.0, 0.5, 1.0),
        (115.0, 25.0, 0.5, math.sqrt(115.0 / 25.0)),
    ],
)
def test_semivariogram_values(h: float, lambda_: float, kappa: float, expected: float) -> None:
    assert semivariogram(h, DependenceModel.brown_resnick(lambda_, kappa)) == pytest.approx(expected, rel=1e-12)


def test_semivariogram_at_115() -> None:
    assert semivariogram(115.0, DependenceModel.brown_resnick(25.0, 0.5)) == pytest.approx(2.1448, abs=1e-4)


@pytest.mark.parametrize(
    "h, expected",
    [(0.0, 1.0), (208.0, math.exp(-1.0)), (100.0, math.exp(-math.sqrt(100.0 / 208.0)))],
)
def test_correlation_values(h: float, expected: float) -> None:
    assert correlation(h, DependenceModel.schlather(208.0, 0.5)) == pytest.approx(expected, rel=1e-12)


def test_correlation_near_one_half_at_100() -> None:
    assert correlation(100.0, DependenceModel.schlather(208.0, 0.5)) == pytest.approx(0.4999, abs=2e-4)


def test_family_mismatch(br_model: DependenceModel, sch_model: DependenceModel) -> None:
    with pytest.raises(FamilyMismatchError):
        semivariogram(1.0, sch_model)
    with pytest.raises(FamilyMismatchError):
        correlation(1.0, br_model)


def test_negative_distance_rejected(br_model: DependenceModel) -> None:
    with pytest.raises(DomainError):
        semivariogram(-1.0, br_model)


@given(st.lists(st.floats(min_value=0.0, max_value=1e3), min_size=2, max_size=20))
def test_dependence_functions_monotone(distances: list[float]) -> None:
    h = np.sort(np.asarray(distances))
    gamma = semivariogram(h, DependenceModel.brown_resnick(25.0, 0.5))
    rho = correlation(h, DependenceModel.schlather(208.0, 0.5))
    assert np.all(np.diff(gamma) >= 0)
    assert np.all(np.diff(rho) <= 0)
    assert np.all(rho > 0)


@pytest.mark.parametrize(("lambda_", "kappa"), [(0.0, 1.0), (-1.0, 1.0), (10.0, 0.0), (10.0, 2.5)])
def test_model_parameters_validated(lambda_: float, kappa: float) -> None:
    with pytest.raises(DomainError):
        DependenceModel.brown_resnick(lambda_, kappa)


def test_presets() -> None:
    assert DependenceModel.preset("br-wiggly") == DependenceModel.brown_resnick(54.0, 1.0)
    assert DependenceModel.preset("sch-smooth") == DependenceModel.schlather(128.0, 1.5)
    with pytest.raises(ConfigurationError):
        DependenceModel.preset("smith")


@pytest.mark.parametrize(("name", "family"), [("br", Family.BROWN_RESNICK), ("Brown_Resnick", Family.BROWN_RESNICK), ("sch", Family.SCHLATHER)])
def test_family_aliases(name: str, family: Family) -> None:
    assert Family.parse(name) is family


def test_unknown_family() -> None:
    with pytest.raises(ConfigurationError):
        Family.parse("extremal-t")


def test_site_set_defaults() -> None:
    sites = SiteSet(np.array([25.0, 50.0]))
    assert sites.dim == 1
    assert sites.labels == ("s1", "s2")
    assert list(sites.covariates) == ["coord1"]


def test_site_set_rejects_non_finite() -> None:
    with pytest.raises(DomainError):
        SiteSet(np.array([[0.0, np.nan]]))


def test_grid_layout() -> None:
    grid = SiteSet.grid([0.0, 0.0], [1.0, 2.0], [2, 3])
    assert len(grid) == 6
    assert grid.labels[0] == "g1"
    np.testing.assert_allclose(grid.coords[1], [0.0, 1.0])
    np.testing.assert_allclose(grid.coords[-1], [1.0, 2.0])


def test_subset_and_concat(stations: SiteSet) -> None:
    head = stations.subset([0, 2])
    assert head.labels == ("A", "C")
    joined = head.concat(stations.subset([4]))
    assert joined.labels == ("A", "C", "E")
    np.testing.assert_array_equal(joined.coords[-1], stations.coords[4])


def test_covariance_is_spd(model: DependenceModel, rng: np.random.Generator) -> None:
    for _ in range(10):
        sites = random_sites(rng, 8)
        origin = resolve_origin(sites) if model.is_brown_resnick else None
        matrix = covariance_matrix(sites, model, origin=origin)
        np.testing.assert_array_equal(matrix, matrix.T)
        linalg.cholesky(matrix, lower=True)


def test_brown_resnick_covariance_diagonal(br_model: DependenceModel, stations: SiteSet) -> None:
    matrix = covariance_matrix(stations, br_model)
    np.testing.assert_allclose(np.diag(matrix), 2.0 * origin_semivariogram(stations, br_model), rtol=1e-12)


def test_schlather_covariance_unit_diagonal(sch_model: DependenceModel, stations: SiteSet) -> None:
    np.testing.assert_allclose(np.diag(covariance_matrix(stations, sch_model)), 1.0)


def test_duplicate_sites_rejected(model: DependenceModel) -> None:
    sites = SiteSet(np.array([[1.0, 1.0], [1.0, 1.0], [3.0, 2.0]]))
    with pytest.raises(SingularCovarianceError):
        covariance_matrix(sites, model)


def test_site_at_origin_rejected(br_model: DependenceModel) -> None:
    sites = SiteSet(np.array([[0.0, 0.0], [10.0, 0.0]]))
    with pytest.raises(SingularCovarianceError):
        covariance_matrix(sites, br_model)
    covariance_matrix(sites, br_model, origin=resolve_origin(sites))


@given(arrays(np.float64, (6, 2), elements=st.floats(min_value=-50.0, max_value=50.0)))
def test_resolve_origin_avoids_sites(coords: np.ndarray) -> None:
    sites = SiteSet(coords)
    origin = resolve_origin(sites)
    assert origin.shape == (2,)
    assert np.all(np.isfinite(origin))


def test_resolve_origin_moves_off_central_site() -> None:
    sites = SiteSet(np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 0.0]]))
    origin = resolve_origin(sites)
    assert np.min(np.linalg.norm(sites.coords - origin, axis=1)) >= 0.25 * sites.min_spacing()


def test_extremal_coefficient_at_zero(model: DependenceModel) -> None:
    assert extremal_coefficient(0.0, model) == pytest.approx(1.0)


def test_extremal_coefficient_anchors() -> None:
    assert extremal_coefficient(115.0, DependenceModel.brown_resnick(25.0, 0.5)) == pytest.approx(1.70, abs=0.01)
    assert extremal_coefficient(100.0, DependenceModel.schlather(208.0, 0.5)) == pytest.approx(1.50, abs=0.01)


def test_extremal_coefficient_bounds(model: DependenceModel) -> None:
    theta = extremal_coefficient(np.linspace(0.0, 5000.0, 200), model)
    assert np.all(theta >= 1.0)
    assert np.all(theta <= 2.0)
    assert np.all(np.diff(theta) >= 0)


def test_practical_range() -> None:
    assert practical_range(DependenceModel.brown_resnick(38.0, 0.69)) == pytest.approx(115.0, abs=2.0)
    h = practical_range(DependenceModel.brown_resnick(25.0, 0.5))
    assert extremal_coefficient(h, DependenceModel.brown_resnick(25.0, 0.5)) == pytest.approx(1.7, abs=1e-8)


def test_practical_range_unreachable(sch_model: DependenceModel) -> None:
    with pytest.raises(DomainError):
        practical_range(sch_model, 1.75)


def test_empirical_extremal_coefficient(rng: np.random.Generator) -> None:
    a = 1.0 / rng.standard_exponential(20_000)
    b = 1.0 / rng.standard_exponential(20_000)
    assert empirical_extremal_coefficient(a, a) == pytest.approx(1.0, abs=0.05)
    assert empirical_extremal_coefficient(a, b) == pytest.approx(2.0, abs=0.05)


def test_empirical_extremal_coefficient_validates() -> None:
    with pytest.raises(DomainError):
        empirical_extremal_coefficient([1.0, 2.0], [1.0])
    with pytest.raises(DomainError):
        empirical_extremal_coefficient([1.0, -2.0], [1.0, 2.0])
