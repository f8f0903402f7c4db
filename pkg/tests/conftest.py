from __future__ import annotations

import os

import hypothesis
import numpy as np
import pytest

from utilities.geometry import DependenceModel, SiteSet

hypothesis.settings.register_profile("fast", max_examples=15, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None, derandomize=True)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture
def br_model() -> DependenceModel:
    return DependenceModel.preset("br-very-wiggly")


@pytest.fixture
def sch_model() -> DependenceModel:
    return DependenceModel.preset("sch-very-wiggly")


@pytest.fixture(params=["br-very-wiggly", "sch-very-wiggly"])
def model(request: pytest.FixtureRequest) -> DependenceModel:
    return DependenceModel.preset(request.param)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20121)


@pytest.fixture
def stations() -> SiteSet:
    return SiteSet(
        np.array([[20.0, 25.0], [70.0, 30.0], [115.0, 40.0], [45.0, 95.0], [110.0, 120.0]]),
        ("A", "B", "C", "D", "E"),
    )


@pytest.fixture
def station_values() -> np.ndarray:
    return np.array([3.9, 0.9, 1.6, 8.2, 2.4])


def random_sites(rng: np.random.Generator, k: int, *, side: float = 100.0, dim: int = 2) -> SiteSet:
    """Uniform sites in a box, redrawn until no two are closer than 1."""
    while True:
        coords = rng.uniform(0.0, side, size=(k, dim))
        sites = SiteSet(coords)
        if sites.min_spacing() > 1.0:
            return sites
