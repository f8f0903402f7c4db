from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from utilities.errors import ConfigurationError, DomainError
from utilities.geometry import SiteSet
from utilities.margins import (
    GevParams,
    MarginScale,
    MarginSpec,
    TrendSurface,
    frechet_to_gev,
    frechet_to_gumbel,
    gev_to_frechet,
    gumbel_to_frechet,
    trend_surface_eval,
    unconditional_median,
)

TREND = TrendSurface(
    location={"intercept": 10.0, "alt": -0.005},
    scale={"intercept": 2.0},
    shape={"intercept": 0.1},
)
SITES = SiteSet(
    np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]),
    ("a", "b", "c"),
    {"coord1": np.array([0.0, 10.0, 0.0]), "coord2": np.array([0.0, 0.0, 10.0]), "alt": np.array([0.0, 400.0, 1000.0])},
)


def test_gumbel_examples() -> None:
    assert frechet_to_gumbel(1.0) == 0.0
    assert frechet_to_gumbel(math.e) == pytest.approx(1.0)
    assert gumbel_to_frechet(0.0) == 1.0
    with pytest.raises(DomainError):
        frechet_to_gumbel(0.0)


def test_gev_examples() -> None:
    p = GevParams(10.0, 2.0, 0.5)
    assert frechet_to_gev(1.0, p) == pytest.approx(10.0)
    assert frechet_to_gev(4.0, p) == pytest.approx(14.0)
    assert gev_to_frechet(14.0, p) == pytest.approx(4.0)


@given(
    st.floats(min_value=1e-3, max_value=1e3),
    st.floats(min_value=-5.0, max_value=5.0),
    st.floats(min_value=0.1, max_value=5.0),
    st.floats(min_value=-0.4, max_value=0.4),
)
def test_gev_inverse(z: float, location: float, scale: float, shape: float) -> None:
    p = GevParams(location, scale, shape)
    assert gev_to_frechet(frechet_to_gev(z, p), p) == pytest.approx(z, rel=1e-8)


def test_gev_shape_continuity() -> None:
    z = np.array([0.2, 1.0, 7.5])
    limit = frechet_to_gev(z, GevParams(1.0, 3.0, 0.0))
    np.testing.assert_allclose(frechet_to_gev(z, GevParams(1.0, 3.0, 1e-6)), limit, rtol=1e-5)
    np.testing.assert_allclose(frechet_to_gev(z, GevParams(1.0, 3.0, -1e-6)), limit, rtol=1e-5)
    assert GevParams(shape=1e-9).is_gumbel


def test_gev_support() -> None:
    with pytest.raises(DomainError):
        gev_to_frechet(0.0, GevParams(10.0, 1.0, 0.5))
    with pytest.raises(DomainError):
        GevParams(scale=0.0)


def test_unconditional_median() -> None:
    p = GevParams(10.0, 2.0, 0.0)
    assert unconditional_median(p) == pytest.approx(10.0 - 2.0 * math.log(math.log(2.0)))


def test_trend_surface_eval() -> None:
    p = trend_surface_eval(TREND, {"alt": 400.0})
    assert (p.location, p.scale, p.shape) == pytest.approx((8.0, 2.0, 0.1))
    assert TREND.covariates == frozenset({"alt"})


def test_trend_surface_errors() -> None:
    with pytest.raises(ConfigurationError):
        trend_surface_eval(TREND, {"elevation": 400.0})
    with pytest.raises(DomainError):
        trend_surface_eval(TrendSurface(scale={"intercept": 1.0, "alt": -0.01}), {"alt": 200.0})


def test_gev_spec_needs_trend() -> None:
    with pytest.raises(ConfigurationError):
        MarginSpec(MarginScale.GEV)


def test_spec_scales() -> None:
    values = np.array([0.5, 1.0, 2.0])
    np.testing.assert_array_equal(MarginSpec("frechet").to_frechet(values, SITES), values)
    np.testing.assert_allclose(MarginSpec("gumbel").from_frechet(values, SITES), np.log(values))
    with pytest.raises(DomainError):
        MarginSpec().to_frechet(-values, SITES)


def test_spec_gev_per_site() -> None:
    spec = MarginSpec(MarginScale.GEV, TREND)
    params = spec.parameters(SITES)
    assert [p.location for p in params] == pytest.approx([10.0, 8.0, 5.0])

    frechet = np.array([0.5, 1.0, 2.0])
    observed = spec.from_frechet(frechet, SITES)
    np.testing.assert_allclose(spec.to_frechet(observed, SITES), frechet, rtol=1e-12)


def test_spec_replicate_matrix() -> None:
    spec = MarginSpec(MarginScale.GEV, TREND)
    samples = np.array([[0.5, 1.0, 2.0], [3.0, 0.2, 1.0]])
    out = spec.from_frechet(samples, SITES)
    assert out.shape == (2, 3)
    np.testing.assert_allclose(out[1], spec.from_frechet(samples[1], SITES))


def test_spec_medians() -> None:
    spec = MarginSpec(MarginScale.GEV, TREND)
    expected = [unconditional_median(p) for p in spec.parameters(SITES)]
    np.testing.assert_allclose(spec.medians(SITES), expected)
    np.testing.assert_allclose(MarginSpec().medians(SITES), 1.0 / math.log(2.0))
