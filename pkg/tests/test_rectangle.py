from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from utilities.errors import CapacityError, ConfigurationError, DomainError
from utilities.rectangle import QMCSettings, RectProbEstimate, mvn_rect_prob, mvt_rect_prob


@pytest.mark.parametrize("rho", [-0.7, -0.2, 0.0, 0.4, 0.9])
def test_bivariate_orthant(rho: float) -> None:
    cov = np.array([[1.0, rho], [rho, 1.0]])
    estimate = mvn_rect_prob([0.0, 0.0], cov, [-np.inf, -np.inf], [0.0, 0.0])
    assert estimate.value == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=2e-4)
    assert estimate.std_error <= 5e-4


def test_independent_product() -> None:
    lower = np.array([-1.0, -np.inf, 0.5, -2.0])
    upper = np.array([1.0, 0.3, np.inf, 2.5])
    sd = np.array([1.0, 2.0, 0.5, 1.5])
    estimate = mvn_rect_prob(np.zeros(4), np.diag(sd**2), lower, upper)
    expected = np.prod(stats.norm.cdf(upper / sd) - stats.norm.cdf(lower / sd))
    assert estimate.value == pytest.approx(expected, abs=1e-4)


def test_against_scipy_cdf() -> None:
    cov = np.array([[1.0, 0.5, 0.2], [0.5, 2.0, 0.3], [0.2, 0.3, 1.5]])
    mean = np.array([0.1, -0.4, 0.3])
    upper = np.array([0.5, 0.2, 1.0])
    expected = stats.multivariate_normal(mean, cov).cdf(upper)
    estimate = mvn_rect_prob(mean, cov, np.full(3, -np.inf), upper)
    assert estimate.value == pytest.approx(expected, abs=1e-3)


def test_one_dimension_exact() -> None:
    estimate = mvn_rect_prob([1.0], [[4.0]], [-1.0], [3.0])
    assert estimate.value == pytest.approx(stats.norm.cdf(1.0) - stats.norm.cdf(-1.0), rel=1e-12)
    assert estimate.std_error == 0.0


def test_zero_dimension_certain() -> None:
    assert mvn_rect_prob(np.zeros(0), np.zeros((0, 0)), np.zeros(0), np.zeros(0)).value == 1.0


def test_seed_reproducible() -> None:
    cov = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.6], [0.1, 0.6, 1.0]])
    args = (np.zeros(3), cov, np.full(3, -1.0), np.ones(3))
    assert mvn_rect_prob(*args, rng=42) == mvn_rect_prob(*args, rng=42)


def test_student_one_dimension() -> None:
    estimate = mvt_rect_prob(3.0, [0.0], [[1.0]], [-np.inf], [1.0])
    assert estimate.value == pytest.approx(stats.t.cdf(1.0, 3.0), rel=1e-12)


def test_student_orthant() -> None:
    # Orthant probabilities are invariant under the chi mixing.
    rho = 0.5
    cov = np.array([[1.0, rho], [rho, 1.0]])
    estimate = mvt_rect_prob(4.0, [0.0, 0.0], cov, [-np.inf, -np.inf], [0.0, 0.0])
    assert estimate.value == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-3)


def test_student_against_scipy() -> None:
    cov = np.array([[1.0, 0.4], [0.4, 2.0]])
    upper = np.array([0.7, 1.2])
    expected = stats.multivariate_t(np.zeros(2), cov, df=5.0).cdf(upper)
    estimate = mvt_rect_prob(5.0, np.zeros(2), cov, np.full(2, -np.inf), upper)
    assert estimate.value == pytest.approx(expected, abs=2e-3)


def test_invalid_rectangle() -> None:
    with pytest.raises(DomainError):
        mvn_rect_prob([0.0, 0.0], np.eye(2), [0.0, 1.0], [0.0, 2.0])
    with pytest.raises(DomainError):
        mvn_rect_prob([0.0, 0.0], np.eye(2), [0.0, np.nan], [1.0, 2.0])
    with pytest.raises(DomainError):
        mvn_rect_prob([0.0], np.eye(2), [0.0, 0.0], [1.0, 1.0])


def test_invalid_degrees_of_freedom() -> None:
    with pytest.raises(DomainError):
        mvt_rect_prob(0.0, [0.0], [[1.0]], [-1.0], [1.0])


def test_dimension_guard() -> None:
    settings = QMCSettings(max_dim=3)
    with pytest.raises(CapacityError):
        mvn_rect_prob(np.zeros(4), np.eye(4), np.full(4, -1.0), np.ones(4), settings)


@pytest.mark.parametrize(("n_points", "n_shifts"), [(1000, 12), (1, 12), (1024, 1)])
def test_settings_validated(n_points: int, n_shifts: int) -> None:
    with pytest.raises(ConfigurationError):
        QMCSettings(n_points=n_points, n_shifts=n_shifts)


def test_estimate_clamped() -> None:
    assert RectProbEstimate(1.0000001, 0.0, 1).value == 1.0
    assert RectProbEstimate(-1e-12, 0.0, 1).log_value == -math.inf
