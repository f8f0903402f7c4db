from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from utilities.errors import CapacityError, ConfigurationError, DomainError, RejectionFailure, SingularCovarianceError
from utilities.geometry import (
    DependenceModel,
    SiteSet,
    empirical_extremal_coefficient,
    extremal_coefficient,
    practical_range,
)
from utilities.partitions import ChainSettings
from utilities.rectangle import QMCSettings
from utilities.simulation import (
    BlockSampler,
    ConditionalSimulator,
    ConditioningSet,
    SimulationConfig,
    SpectralSampler,
    TruncationPolicy,
    conditional_cdf,
    conditional_simulate,
    exponent_measure,
    sample_extremal_function,
    sample_sub_extremal,
    unconditional_simulate,
)

FAST = SimulationConfig(chain=ChainSettings(length=60, burn_in=50, thinning=10), seed=5)


@pytest.fixture
def cond(stations: SiteSet, station_values: np.ndarray) -> ConditioningSet:
    return ConditioningSet(stations, station_values)


def test_conditioning_set_validated(stations: SiteSet) -> None:
    with pytest.raises(DomainError):
        ConditioningSet(stations, np.ones(4))
    with pytest.raises(DomainError):
        ConditioningSet(stations, np.array([1.0, 2.0, -1.0, 1.0, 1.0]))
    with pytest.raises(SingularCovarianceError):
        ConditioningSet(SiteSet(np.array([[1.0, 1.0], [1.0, 1.0]])), np.ones(2))


def test_conditioning_set_permuted(cond: ConditioningSet) -> None:
    flipped = cond.permuted([4, 3, 2, 1, 0])
    assert flipped.x.labels == ("E", "D", "C", "B", "A")
    np.testing.assert_array_equal(flipped.z, cond.z[::-1])


@pytest.mark.parametrize(("field", "value"), [("rejection_cap", 0), ("ridge", -1.0), ("seed", -3)])
def test_simulation_config_validated(field: str, value: float) -> None:
    with pytest.raises(ConfigurationError):
        SimulationConfig(**{field: value})


def test_streams_independent_of_order() -> None:
    config = SimulationConfig(seed=9)
    first = config.stream(4).random(3)
    config.stream(0).random(100)
    np.testing.assert_array_equal(config.stream(4).random(3), first)
    assert not np.array_equal(config.stream(5).random(3), first)


def test_truncation_policy_validated() -> None:
    with pytest.raises(ConfigurationError):
        TruncationPolicy(q_brown_resnick=0.0)
    with pytest.raises(ConfigurationError):
        TruncationPolicy(max_atoms=0)


def test_unit_frechet_margins(model: DependenceModel, rng: np.random.Generator) -> None:
    sites = SiteSet(np.array([[0.0, 0.0], [40.0, 10.0], [90.0, 90.0]]))
    sampler = SpectralSampler(model, sites)
    values = np.array([sampler.unconditional(rng).values for _ in range(3000)])
    assert np.all(values > 0)
    np.testing.assert_allclose(np.mean(values <= 1.0, axis=0), math.exp(-1.0), atol=0.03)
    np.testing.assert_allclose(np.mean(values <= 4.0, axis=0), math.exp(-0.25), atol=0.03)


def test_unconditional_extremal_coefficient(model: DependenceModel, rng: np.random.Generator) -> None:
    h = 60.0
    sites = SiteSet(np.array([[0.0], [h]]))
    sampler = SpectralSampler(model, sites)
    values = np.array([sampler.unconditional(rng).values for _ in range(3000)])
    estimate = empirical_extremal_coefficient(values[:, 0], values[:, 1])
    assert estimate == pytest.approx(extremal_coefficient(h, model), abs=0.1)


def test_unconditional_budget_exhausted(br_model: DependenceModel, rng: np.random.Generator) -> None:
    sites = SiteSet.grid([0.0, 0.0], [200.0, 200.0], [4, 4])
    realization = unconditional_simulate(br_model, sites, rng, TruncationPolicy(max_atoms=3, batch_size=1))
    assert realization.exhausted
    assert realization.n_atoms == 3


def test_unconditional_empty(br_model: DependenceModel, rng: np.random.Generator) -> None:
    assert unconditional_simulate(br_model, SiteSet(np.zeros((0, 2))), rng).values.shape == (0,)


def test_conditioning_reproduced(model: DependenceModel, cond: ConditioningSet) -> None:
    targets = SiteSet(np.array([[50.0, 50.0], [70.0, 30.0], [20.0, 25.0], [100.0, 80.0]]))
    simulator = ConditionalSimulator(model, cond, targets, FAST)
    for r in range(5):
        realization = simulator.simulate(FAST.stream(r), replicate=r)
        assert realization.values[1] == cond.z[1]
        assert realization.values[2] == cond.z[0]
        assert np.all(realization.values >= 0)
        assert realization.replicate == r
        assert realization.partition.k == cond.k
        assert set(realization.timings) == {"partition", "extremal", "sub-extremal"}


def test_single_conditioning_site(model: DependenceModel, rng: np.random.Generator) -> None:
    cond = ConditioningSet(SiteSet(np.array([[50.0, 50.0]])), np.array([2.0]))
    targets = SiteSet(np.array([[50.0, 50.0], [55.0, 50.0], [150.0, 150.0]]))
    realization = conditional_simulate(model, cond, targets, FAST, rng)
    assert realization.values[0] == 2.0
    assert str(realization.partition) == "1"
    assert len(realization.rejection_attempts) == 1


def test_nearby_target_follows_conditioning(br_model: DependenceModel) -> None:
    cond = ConditioningSet(SiteSet(np.array([[50.0, 50.0]])), np.array([20.0]))
    targets = SiteSet(np.array([[50.5, 50.0]]))
    draws = np.array([conditional_simulate(br_model, cond, targets, FAST, replicate=r).values[0] for r in range(200)])
    assert np.median(draws) == pytest.approx(20.0, rel=0.25)


def test_replicate_is_deterministic(br_model: DependenceModel, cond: ConditioningSet) -> None:
    targets = SiteSet.grid([0.0, 0.0], [120.0, 120.0], [4, 4])
    first = conditional_simulate(br_model, cond, targets, FAST, replicate=3)
    second = conditional_simulate(br_model, cond, targets, FAST, replicate=3)
    np.testing.assert_array_equal(first.values, second.values)
    assert first.partition == second.partition


def test_gibbs_used_above_threshold(br_model: DependenceModel, cond: ConditioningSet) -> None:
    targets = SiteSet(np.array([[60.0, 60.0]]))
    assert not ConditionalSimulator(br_model, cond, targets, FAST).uses_gibbs
    config = SimulationConfig(chain=FAST.chain, exact_k_threshold=3)
    simulator = ConditionalSimulator(br_model, cond, targets, config)
    assert simulator.uses_gibbs
    assert simulator.draw_partition(np.random.default_rng(0)).k == 5


def test_block_sampler_reuse(br_model: DependenceModel, cond: ConditioningSet) -> None:
    simulator = ConditionalSimulator(br_model, cond, SiteSet(np.array([[60.0, 60.0]])), FAST)
    assert simulator.block_sampler((0, 3)) is simulator.block_sampler((0, 3))


def test_block_sampler_without_rest(model: DependenceModel, cond: ConditioningSet, rng: np.random.Generator) -> None:
    targets = SiteSet(np.array([[60.0, 60.0], [10.0, 90.0]]))
    sampler = BlockSampler(model, cond, tuple(range(cond.k)), targets)
    values, attempts = sampler.draw(rng)
    assert values.shape == (2,)
    assert attempts == 1
    assert sampler.acceptance_probability() == 1.0


def test_extremal_function_near_its_block(br_model: DependenceModel, rng: np.random.Generator) -> None:
    x = SiteSet(np.array([[0.0, 0.0], [60.0, 0.0]]))
    cond = ConditioningSet(x, np.array([30.0, 0.5]))
    targets = SiteSet(np.array([[0.5, 0.0]]))
    values = np.array([sample_extremal_function(br_model, cond, [0], targets, rng)[0] for _ in range(200)])
    assert np.median(values) == pytest.approx(30.0, rel=0.4)


def test_rejection_failure(br_model: DependenceModel, rng: np.random.Generator) -> None:
    x = SiteSet(np.array([[0.0, 0.0], [1.0, 0.0]]))
    cond = ConditioningSet(x, np.array([1000.0, 0.01]))
    sampler = BlockSampler(br_model, cond, (0,), SiteSet(np.array([[5.0, 5.0]])))
    with pytest.raises(RejectionFailure) as info:
        sampler.draw(rng, cap=500)
    assert info.value.attempts == 500
    assert info.value.acceptance_rate == 0.0
    assert info.value.rectangle_probability is not None
    assert info.value.rectangle_probability < 1e-6


def test_sub_extremal_stays_below_conditioning(model: DependenceModel, rng: np.random.Generator) -> None:
    x = SiteSet(np.array([[0.0, 0.0], [40.0, 0.0]]))
    cond = ConditioningSet(x, np.array([0.7, 1.2]))
    targets = SiteSet(np.array([[0.0, 0.0], [40.0, 0.0], [20.0, 0.0]]))
    for _ in range(20):
        values = sample_sub_extremal(model, cond, targets, rng)
        assert values[0] < 0.7
        assert values[1] < 1.2
        assert values[2] >= 0


def test_exponent_measure_known_values(model: DependenceModel) -> None:
    site = SiteSet(np.array([[3.0, 4.0]]))
    assert exponent_measure(model, site, [2.0]) == pytest.approx(0.5)

    h = 50.0
    pair = SiteSet(np.array([[0.0, 0.0], [h, 0.0]]))
    theta = extremal_coefficient(h, model)
    assert exponent_measure(model, pair, [1.0, 1.0]) == pytest.approx(theta, abs=2e-3)
    assert exponent_measure(model, pair, [2.0, math.inf]) == pytest.approx(0.5, abs=1e-6)
    assert exponent_measure(model, pair, [0.0, 1.0]) == math.inf


def test_conditional_cdf_properties(model: DependenceModel, cond: ConditioningSet) -> None:
    targets = SiteSet(np.array([[60.0, 60.0]]))
    config = SimulationConfig(qmc=QMCSettings(n_points=256, n_shifts=4))
    values = [conditional_cdf(model, cond, targets, [a], config) for a in (0.5, 1.0, 3.0, 20.0)]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert values == sorted(values)
    assert conditional_cdf(model, cond, targets, [0.0], config) == 0.0


def test_conditional_cdf_at_conditioning_site(br_model: DependenceModel, cond: ConditioningSet) -> None:
    targets = cond.x.subset([0])
    assert conditional_cdf(br_model, cond, targets, [cond.z[0] - 0.1]) == 0.0
    assert conditional_cdf(br_model, cond, targets, [cond.z[0]]) == 1.0


def test_conditional_cdf_capacity(br_model: DependenceModel) -> None:
    x = SiteSet(np.arange(6.0) * 20.0 + 5.0)
    cond = ConditioningSet(x, np.ones(6))
    with pytest.raises(CapacityError):
        conditional_cdf(br_model, cond, SiteSet(np.array([50.0])), [1.0])


@pytest.mark.slow
def test_conditional_cdf_matches_simulation(br_model: DependenceModel) -> None:
    x = SiteSet(np.array([[0.0, 0.0], [40.0, 0.0], [0.0, 40.0]]))
    cond = ConditioningSet(x, np.array([1.5, 0.6, 2.5]))
    targets = SiteSet(np.array([[20.0, 20.0]]))
    config = SimulationConfig(seed=17)
    simulator = ConditionalSimulator(br_model, cond, targets, config)
    draws = np.array([simulator.simulate(config.stream(r)).values[0] for r in range(4000)])
    for a in (0.8, 1.5, 3.0):
        expected = conditional_cdf(br_model, cond, targets, [a], config)
        assert np.mean(draws <= a) == pytest.approx(expected, abs=0.03)


@pytest.mark.slow
def test_large_grid_with_gibbs(br_model: DependenceModel) -> None:
    rng = np.random.default_rng(1)
    coords = rng.uniform(0.0, 100.0 * math.sqrt(2.0), size=(10, 2))
    sampler = SpectralSampler(br_model, SiteSet(coords))
    z = sampler.unconditional(rng).values
    cond = ConditioningSet(SiteSet(coords), z)
    targets = SiteSet.grid([0.0, 0.0], [100.0 * math.sqrt(2.0)] * 2, [50, 50])
    config = SimulationConfig(seed=3)
    simulator = ConditionalSimulator(br_model, cond, targets, config)
    assert simulator.uses_gibbs
    realization = simulator.simulate(config.stream(0), replicate=0)
    assert realization.values.shape == (2500,)
    assert np.all(np.isfinite(realization.values))


def test_realization_acceptance_rate(br_model: DependenceModel, cond: ConditioningSet) -> None:
    targets = SiteSet(np.array([[60.0, 60.0], [10.0, 90.0]]))
    realization = conditional_simulate(br_model, cond, targets, FAST, replicate=1)
    attempts = realization.rejection_attempts
    assert len(attempts) == len(realization.partition.blocks)
    assert realization.acceptance_rate == pytest.approx(len(attempts) / sum(attempts))
    assert 0.0 < realization.acceptance_rate <= 1.0


def test_rejection_attempts_match_rectangle_probability(model: DependenceModel, rng: np.random.Generator) -> None:
    x = SiteSet(np.array([[0.0, 0.0], [20.0, 0.0]]))
    cond = ConditioningSet(x, np.array([5.0, 1.0]))
    sampler = BlockSampler(model, cond, (0,), SiteSet(np.array([[10.0, 5.0]])))
    expected = sampler.acceptance_probability()
    assert 0.0 < expected < 1.0

    attempts = [sampler.draw(rng)[1] for _ in range(2000)]
    assert 2000 / sum(attempts) == pytest.approx(expected, rel=0.1)


def test_sub_extremal_epsilon_merges_close_targets(br_model: DependenceModel, rng: np.random.Generator) -> None:
    x = SiteSet(np.array([[0.0, 0.0], [40.0, 0.0]]))
    cond = ConditioningSet(x, np.array([0.7, 1.2]))
    targets = SiteSet(np.array([[0.0, 0.0], [1e-6, 0.0], [20.0, 0.0]]))
    values = sample_sub_extremal(br_model, cond, targets, rng, epsilon=1e-3)
    assert values[1] == values[0]
    assert values[0] < 0.7


def test_conditional_law_is_not_max_stable(br_model: DependenceModel) -> None:
    cond = ConditioningSet(SiteSet(np.array([[50.0, 50.0]])), np.array([2.0]))
    targets = SiteSet(np.array([[50.5, 50.0]]))
    simulator = ConditionalSimulator(br_model, cond, targets, FAST)
    draws = np.array([simulator.simulate(FAST.stream(r)).values[0] for r in range(1000)])

    # a unit Fréchet max-stable law is invariant under max of two copies divided by two
    pooled = np.maximum(draws[500:750], draws[750:]) / 2.0
    assert stats.ks_2samp(draws[:500], pooled).pvalue < 1e-6
    assert stats.kstest(draws, stats.invweibull(1.0).cdf).pvalue < 1e-6


@pytest.mark.slow
@pytest.mark.parametrize(
    ("preset", "distances"),
    [("br-very-wiggly", (10.0, 40.0, 115.0)), ("sch-very-wiggly", (25.0, 100.0, 400.0))],
)
def test_single_site_conditional_law(preset: str, distances: tuple[float, ...]) -> None:
    model = DependenceModel.preset(preset)
    cond = ConditioningSet(SiteSet(np.array([[0.0, 0.0]])), np.array([1.5]))
    config = SimulationConfig(seed=23)
    for h in distances:
        targets = SiteSet(np.array([[h, 0.0]]))
        simulator = ConditionalSimulator(model, cond, targets, config)
        draws = np.array([simulator.simulate(config.stream(r)).values[0] for r in range(10_000)])

        grid = np.log(np.quantile(draws, np.linspace(0.0005, 0.9995, 300)))
        cdf = np.array([conditional_cdf(model, cond, targets, [math.exp(g)], config) for g in grid])
        result = stats.kstest(draws, lambda v, grid=grid, cdf=cdf: np.interp(np.log(v), grid, cdf))
        assert result.statistic <= 0.02, f"h={h}"


@pytest.mark.slow
def test_far_field_returns_to_gumbel_margins(br_model: DependenceModel) -> None:
    x = SiteSet(np.array([[10.0, 10.0], [40.0, 20.0], [70.0, 15.0], [25.0, 60.0], [80.0, 75.0]]))
    cond = ConditioningSet(x, np.array([0.9, 1.4, 2.2, 1.1, 1.7]))
    distance = 1000.0
    assert distance > 3.0 * practical_range(br_model)
    targets = SiteSet(np.array([[50.0 + distance, 50.0]]))

    config = SimulationConfig(seed=31)
    simulator = ConditionalSimulator(br_model, cond, targets, config)
    gumbel = np.log([simulator.simulate(config.stream(r)).values[0] for r in range(1000)])
    for p in (0.25, 0.5, 0.75):
        assert np.quantile(gumbel, p) == pytest.approx(-math.log(-math.log(p)), abs=0.15)


@pytest.mark.slow
def test_truncation_multiplier_does_not_move_median(model: DependenceModel, cond: ConditioningSet) -> None:
    sub = cond.permuted([0, 1, 3])
    targets = SiteSet(np.array([[40.0, 40.0], [60.0, 50.0], [30.0, 70.0]]))
    default = SimulationConfig(chain=FAST.chain, seed=8)
    doubled = SimulationConfig(chain=FAST.chain, seed=8, truncation=TruncationPolicy(8.0, 9.0))

    medians = []
    for config in (default, doubled):
        simulator = ConditionalSimulator(model, sub, targets, config)
        draws = np.array([simulator.simulate(config.stream(r)).values for r in range(400)])
        medians.append(np.median(np.log(draws), axis=0))
    np.testing.assert_allclose(medians[0], medians[1], atol=0.1)


@pytest.mark.slow
@pytest.mark.parametrize(("preset", "h", "theta"), [("br-very-wiggly", 115.0, 1.70), ("sch-very-wiggly", 100.0, 1.50)])
def test_extremal_coefficient_anchors(preset: str, h: float, theta: float) -> None:
    model = DependenceModel.preset(preset)
    assert extremal_coefficient(h, model) == pytest.approx(theta, abs=5e-3)

    sampler = SpectralSampler(model, SiteSet(np.array([[0.0], [h]])))
    rng = np.random.default_rng(41)
    pairs = np.array([sampler.unconditional(rng).values for _ in range(10_000)])
    assert empirical_extremal_coefficient(pairs[:, 0], pairs[:, 1]) == pytest.approx(theta, abs=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("k", [1, 5, 10])
def test_conditioning_reproduced_every_replicate(model: DependenceModel, k: int) -> None:
    rng = np.random.default_rng(100 + k)
    x = SiteSet(rng.uniform(0.0, 100.0, size=(k, 2)))
    z = unconditional_simulate(model, x, rng).values
    cond = ConditioningSet(x, z)
    targets = x.concat(SiteSet(np.array([[50.0, 50.0], [130.0, 20.0]])))

    config = SimulationConfig(chain=ChainSettings(length=200, burn_in=100, thinning=10), seed=k)
    simulator = ConditionalSimulator(model, cond, targets, config)
    assert simulator.uses_gibbs == (k > config.exact_k_threshold)
    for r in range(1000):
        realization = simulator.simulate(config.stream(r), replicate=r)
        np.testing.assert_array_equal(realization.values[:k], z)
        assert np.all(np.isfinite(realization.values[k:]))
        assert np.all(realization.values[k:] > 0)


@pytest.mark.slow
def test_conditional_law_exchangeable(model: DependenceModel, cond: ConditioningSet) -> None:
    sub = cond.permuted([0, 1, 3])
    targets = SiteSet(np.array([[40.0, 40.0], [90.0, 60.0]]))
    config = SimulationConfig(chain=FAST.chain, seed=13)

    samples = []
    for order in ([0, 1, 2], [2, 0, 1]):
        simulator = ConditionalSimulator(model, sub.permuted(order), targets, config)
        samples.append(np.array([simulator.simulate(config.stream(r)).values for r in range(2000)]))
    for column in range(len(targets)):
        assert stats.ks_2samp(samples[0][:, column], samples[1][:, column]).pvalue > 1e-3
