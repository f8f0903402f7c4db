"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from lru import LRU

from .errors import (
    CapacityError,
    ConfigurationError,
    DomainError,
    MaxCondError,
    RejectionFailure,
    SamplerStepError,
    SingularCovarianceError,
)
from .gaussian import cholesky, gaussian_sample, schur_regression
from .geometry import (
    DUPLICATE_EPSILON,
    correlation,
    covariance_matrix,
    origin_semivariogram,
    resolve_origin,
    semivariogram,
)
from .intensity import conditional_law
from .partitions import (
    MAX_EXACT_K,
    ChainSettings,
    GibbsSampler,
    Partition,
    WeightCache,
    exact_scenario_distribution,
)
from .rectangle import QMCSettings, mvn_rect_prob, mvt_rect_prob

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from .errors import SamplerStep
    from .geometry import DependenceModel, SiteSet
    from .partitions import Block, ScenarioDistribution

__all__ = (
    "BlockSampler",
    "ConditionalRealization",
    "ConditionalSimulator",
    "ConditioningSet",
    "Realization",
    "SimulationConfig",
    "SpectralSampler",
    "TruncationPolicy",
    "conditional_cdf",
    "conditional_simulate",
    "exponent_measure",
    "sample_extremal_function",
    "sample_sub_extremal",
    "unconditional_simulate",
)

LOGGER = logging.getLogger(__name__)

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_MAX_REJECTION_BATCH = 1 << 16


@dataclass(frozen=True, slots=True)
class TruncationPolicy:
    """Stop adding Poisson atoms once ``ζ_i · M`` falls below the current field everywhere.

    ``M`` is a high probability bound on the spectral functions over the watched sites.
    """

    q_brown_resnick: float = 4.0
    q_schlather: float = 4.5
    max_atoms: int = 100_000
    batch_size: int = 256

    def __post_init__(self) -> None:
        if self.q_brown_resnick <= 0 or self.q_schlather <= 0:
            raise ConfigurationError("Envelope multipliers must be positive.", field="truncation")
        if self.max_atoms < 1 or self.batch_size < 1:
            raise ConfigurationError("Atom budget and batch size must be positive.", field="truncation")


@dataclass(frozen=True, slots=True)
class SimulationConfig:
    chain: ChainSettings = field(default_factory=ChainSettings)
    qmc: QMCSettings = field(default_factory=QMCSettings)
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    exact_k_threshold: int = 5
    rejection_cap: int = 1_000_000
    seed: int = 0
    epsilon: float = DUPLICATE_EPSILON
    ridge: float = 0.0
    sampler_cache_size: int = 64

    def __post_init__(self) -> None:
        if self.rejection_cap < 1:
            raise ConfigurationError("Rejection cap must be positive.", field="rejection_cap")
        if self.ridge < 0:
            raise ConfigurationError("Ridge must be nonnegative.", field="ridge")
        if self.seed < 0:
            raise ConfigurationError("Seed must be a nonnegative integer.", field="seed")

    def stream(self, replicate: int, /) -> np.random.Generator:
        """The random stream of one replicate, independent of scheduling."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(replicate,)))


@dataclass(frozen=True, slots=True, eq=False)
class ConditioningSet:
    x: SiteSet
    z: NDArray[np.float64]

    def __post_init__(self) -> None:
        z = np.atleast_1d(np.asarray(self.z, dtype=np.float64))
        if z.shape != (len(self.x),):
            msg = f"Got {z.shape[0]} conditioning values for {len(self.x)} sites"
            raise DomainError(msg)
        if not np.all(np.isfinite(z)) or np.any(z <= 0):
            raise DomainError("Conditioning values must be positive and finite on the unit Fréchet scale.")
        if self.x.min_spacing() < DUPLICATE_EPSILON:
            raise SingularCovarianceError("Conditioning sites must be pairwise distinct.")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def k(self) -> int:
        return len(self.x)

    def permuted(self, order: Sequence[int], /) -> ConditioningSet:
        idx = np.asarray(order, dtype=np.intp)
        return ConditioningSet(self.x.subset(idx), self.z[idx])


@dataclass(frozen=True, slots=True, eq=False)
class Realization:
    values: NDArray[np.float64]
    n_atoms: int
    exhausted: bool = False


@dataclass(frozen=True, slots=True, eq=False)
class ConditionalRealization:
    values: NDArray[np.float64]
    partition: Partition
    n_atoms: int
    rejection_attempts: tuple[int, ...]
    exhausted: bool = False
    timings: dict[SamplerStep, float] = field(default_factory=dict)
    replicate: int | None = None

    @property
    def acceptance_rate(self) -> float:
        """Accepted block draws over proposals made in this replicate, 1 when no block needed rejection."""
        proposals = sum(self.rejection_attempts)
        return len(self.rejection_attempts) / proposals if proposals else 1.0


class SpectralSampler:
    """Draws the spectral functions ``Y`` of the model at a fixed set of sites.

    Brown–Resnick: ``Y = exp(W - γ(· - o))``. Schlather: ``Y = √(2π) ε`` (signed).
    """

    def __init__(
        self,
        model: DependenceModel,
        sites: SiteSet,
        *,
        origin: ArrayLike | None = None,
        ridge: float = 0.0,
    ) -> None:
        self.model: DependenceModel = model
        self.sites: SiteSet = sites
        if model.is_brown_resnick:
            o = resolve_origin(sites) if origin is None else np.asarray(origin, dtype=np.float64)
            matrix = covariance_matrix(sites, model, origin=o, validate=False)
            self.drift: NDArray[np.float64] = origin_semivariogram(sites, model, origin=o)
        else:
            matrix = covariance_matrix(sites, model, validate=False)
            self.drift = np.zeros(len(sites))
        self.factor = cholesky(matrix, ridge=ridge)

    @property
    def dim(self) -> int:
        return self.factor.dim

    def draw(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        gaussian = gaussian_sample(self.factor, np.zeros(self.dim), rng, n)
        if self.model.is_brown_resnick:
            return np.exp(gaussian - self.drift)
        return _SQRT_2PI * gaussian

    def envelope(self, policy: TruncationPolicy, columns: NDArray[np.intp] | None = None) -> float:
        if not self.model.is_brown_resnick:
            return _SQRT_2PI * policy.q_schlather
        drift = self.drift if columns is None else self.drift[columns]
        return math.exp(policy.q_brown_resnick * math.sqrt(2.0 * float(drift.max(initial=0.0))))

    def unconditional(self, rng: np.random.Generator, policy: TruncationPolicy | None = None) -> Realization:
        return _poisson_maxima(self, rng, policy or TruncationPolicy())


def _poisson_maxima(
    sampler: SpectralSampler,
    rng: np.random.Generator,
    policy: TruncationPolicy,
    *,
    watch: NDArray[np.intp] | None = None,
    floor: NDArray[np.float64] | None = None,
    constraint: tuple[NDArray[np.intp], NDArray[np.float64]] | None = None,
) -> Realization:
    """Running maximum of ``ζ_i Y_i`` over atoms ``ζ_i = 1 / Γ_i``, in decreasing order of ``ζ``.

    With ``constraint = (columns, bounds)`` only atoms below ``bounds`` at every constrained column count.
    """
    values = np.zeros(sampler.dim)
    watch = np.arange(sampler.dim) if watch is None else watch
    if not watch.size:
        return Realization(values, 0)

    lowest = np.zeros(watch.size) if floor is None else np.asarray(floor, dtype=np.float64)
    bound = sampler.envelope(policy, watch)
    gamma = 0.0
    atoms = 0
    while True:
        if atoms and bound / gamma <= float(np.maximum(values[watch], lowest).min()):
            return Realization(values, atoms)
        if atoms >= policy.max_atoms:
            LOGGER.warning(
                "Truncation budget of %d atoms exhausted before the stopping rule fired (last ζ·M = %.4g)",
                policy.max_atoms,
                bound / gamma,
            )
            return Realization(values, atoms, exhausted=True)

        n = min(policy.batch_size, policy.max_atoms - atoms)
        arrivals = gamma + np.cumsum(rng.standard_exponential(n))
        gamma = float(arrivals[-1])
        contributions = sampler.draw(rng, n) / arrivals[:, None]
        if constraint is not None:
            columns, bounds = constraint
            contributions = contributions[np.all(contributions[:, columns] < bounds, axis=1)]
        if contributions.shape[0]:
            np.maximum(values, contributions.max(axis=0), out=values)
        atoms += n


def unconditional_simulate(
    model: DependenceModel,
    s: SiteSet,
    rng: np.random.Generator,
    trunc: TruncationPolicy | None = None,
    *,
    origin: ArrayLike | None = None,
    ridge: float = 0.0,
) -> Realization:
    """Approximate realization of the max-stable field on ``s`` with unit Fréchet margins."""
    policy = trunc or TruncationPolicy()
    if not len(s):
        return Realization(np.zeros(0), 0)
    return SpectralSampler(model, s, origin=origin, ridge=ridge).unconditional(rng, policy)


@dataclass(frozen=True, slots=True)
class _Layout:
    """Targets split into free sites and sites that repeat a conditioning site."""

    free: NDArray[np.intp]
    repeated: dict[int, int]

    @classmethod
    def build(cls, s: SiteSet, x: SiteSet, epsilon: float) -> _Layout:
        if not len(s) or not len(x):
            return cls(np.arange(len(s)), {})
        gaps = s.distances(x)
        nearest = gaps.argmin(axis=1)
        close = gaps[np.arange(len(s)), nearest] < epsilon
        return cls(np.flatnonzero(~close), {int(i): int(nearest[i]) for i in np.flatnonzero(close)})


def _sub_extremal(
    sampler: SpectralSampler,
    z: NDArray[np.float64],
    m: int,
    rng: np.random.Generator,
    policy: TruncationPolicy,
    *,
    watch: NDArray[np.intp] | None = None,
    floor: NDArray[np.float64] | None = None,
) -> Realization:
    # sampler columns: first the m free targets, then the k conditioning sites
    columns = np.arange(m, m + z.shape[0])
    watch = np.arange(m) if watch is None else watch
    return _poisson_maxima(sampler, rng, policy, watch=watch, floor=floor, constraint=(columns, z))


def sample_sub_extremal(
    model: DependenceModel,
    cond: ConditioningSet,
    s: SiteSet,
    rng: np.random.Generator,
    trunc: TruncationPolicy | None = None,
    *,
    floor: ArrayLike | None = None,
    origin: ArrayLike | None = None,
    ridge: float = 0.0,
    epsilon: float = DUPLICATE_EPSILON,
) -> NDArray[np.float64]:
    """``Z⁻(s)``: maximum over the atoms that stay below ``z`` at every conditioning site.

    Targets within ``epsilon`` of a conditioning site are read off that site's column.
    """
    policy = trunc or TruncationPolicy()
    layout = _Layout.build(s, cond.x, epsilon)
    free = s.subset(layout.free)
    joint = free.concat(cond.x)
    sampler = SpectralSampler(model, joint, origin=origin, ridge=ridge)

    m = len(free)
    columns = np.empty(len(s), dtype=np.intp)
    columns[layout.free] = np.arange(m)
    for target, site in layout.repeated.items():
        columns[target] = m + site

    lowest = None if floor is None else np.asarray(floor, dtype=np.float64)
    drawn = _sub_extremal(sampler, cond.z, m, rng, policy, watch=columns, floor=lowest)
    return drawn.values[columns]


class BlockSampler:
    """Step 2 for one hitting scenario block: the extremal function at the targets.

    The law of the spectral function at ``(targets, rest)`` given its values on the block is
    sampled in two stages, first the ``rest`` coordinates by rejection below ``z_rest`` and then
    the targets from their exact conditional law given those coordinates.
    """

    def __init__(
        self,
        model: DependenceModel,
        cond: ConditioningSet,
        block: Block,
        s: SiteSet,
        *,
        origin: ArrayLike | None = None,
        ridge: float = 0.0,
    ) -> None:
        self.model: DependenceModel = model
        self.block: Block = tuple(sorted(block))
        rest = [i for i in range(cond.k) if i not in self.block]
        self.m: int = len(s)
        self.c: int = len(rest)

        self.law = conditional_law(
            s.concat(cond.x.subset(rest)),
            cond.x.subset(self.block),
            cond.z[list(self.block)],
            model,
            origin=origin,
        )
        matrix = self.law.sigma if model.is_brown_resnick else self.law.scale
        self.mu_s: NDArray[np.float64] = self.law.mu[: self.m]
        self.mu_c: NDArray[np.float64] = self.law.mu[self.m :]

        upper = cond.z[rest]
        self.bound: NDArray[np.float64] = np.log(upper) if model.is_brown_resnick else upper
        self.rest_factor = cholesky(matrix[self.m :, self.m :], ridge=ridge)
        self.regression = schur_regression(matrix, self.c, ridge=ridge)
        self.noise = cholesky(self.regression.cov, ridge=ridge)

    def __repr__(self) -> str:
        return f"<BlockSampler block={self.block} targets={self.m} rest={self.c}>"

    def acceptance_probability(self, qmc: QMCSettings | None = None, *, rng: int = 0) -> float:
        if not self.c:
            return 1.0
        marginal = self.law.marginal(range(self.m, self.m + self.c))
        upper = np.exp(self.bound) if self.model.is_brown_resnick else self.bound
        return marginal.probability_below(upper, qmc, rng=rng).value

    def _mixing(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        if self.model.is_brown_resnick:
            return np.ones(n)
        df = self.law.df
        return np.sqrt(rng.chisquare(df, size=n) / df)

    def draw(self, rng: np.random.Generator, cap: int = 1_000_000) -> tuple[NDArray[np.float64], int]:
        """One draw of the extremal function at the targets and the number of proposals it took."""
        attempts = 0
        rest = np.zeros(0)
        mixing = 1.0
        if self.c:
            batch = 256
            while True:
                if attempts >= cap:
                    raise RejectionFailure(
                        attempts=attempts,
                        accepted=0,
                        rectangle_probability=self.acceptance_probability(),
                    )
                n = min(batch, cap - attempts)
                scales = self._mixing(rng, n)
                proposals = self.mu_c + gaussian_sample(self.rest_factor, np.zeros(self.c), rng, n) / scales[:, None]
                inside = np.all(proposals < self.bound, axis=1)
                if inside.any():
                    first = int(inside.argmax())
                    attempts += first + 1
                    rest = proposals[first]
                    mixing = float(scales[first])
                    break
                attempts += n
                batch = min(2 * batch, _MAX_REJECTION_BATCH)
        else:
            mixing = float(self._mixing(rng, 1)[0])

        centre = self.mu_s + self.regression.mean(rest - self.mu_c)
        values = centre + gaussian_sample(self.noise, np.zeros(self.m), rng) / mixing
        if self.model.is_brown_resnick:
            values = np.exp(values)
        return values, max(attempts, 1)


def sample_extremal_function(
    model: DependenceModel,
    cond: ConditioningSet,
    block: Sequence[int],
    s: SiteSet,
    rng: np.random.Generator,
    cap: int = 1_000_000,
    *,
    origin: ArrayLike | None = None,
) -> NDArray[np.float64]:
    """``φ⁺(s)`` for the extremal function hitting the conditioning sites ``block`` (0-based)."""
    return BlockSampler(model, cond, tuple(block), s, origin=origin).draw(rng, cap)[0]


class ConditionalSimulator:
    """Draws from the law of the field at ``s`` given ``Z(x) = z``.

    Everything that does not depend on the replicate (scenario weights, the exact scenario law
    for small ``k``, the spectral sampler and the block samplers) is built once and shared.
    """

    def __init__(
        self,
        model: DependenceModel,
        cond: ConditioningSet,
        s: SiteSet,
        config: SimulationConfig | None = None,
    ) -> None:
        self.model: DependenceModel = model
        self.cond: ConditioningSet = cond
        self.targets: SiteSet = s
        self.config: SimulationConfig = config or SimulationConfig()

        self.layout: _Layout = _Layout.build(s, cond.x, self.config.epsilon)
        self.free: SiteSet = s.subset(self.layout.free)
        joint = self.free.concat(cond.x)
        self.origin: NDArray[np.float64] | None = resolve_origin(joint) if model.is_brown_resnick else None

        self.cache: WeightCache = WeightCache(
            model, cond.x, cond.z, self.config.qmc, seed=self.config.seed, origin=self.origin
        )
        self.exact: ScenarioDistribution | None = None
        if 1 < cond.k <= min(self.config.exact_k_threshold, MAX_EXACT_K):
            self.exact = exact_scenario_distribution(model, cond.x, cond.z, cache=self.cache)

        self.spectral: SpectralSampler | None = (
            SpectralSampler(model, joint, origin=self.origin, ridge=self.config.ridge) if len(self.free) else None
        )
        self._samplers: LRU = LRU(self.config.sampler_cache_size)
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"<ConditionalSimulator {self.model} k={self.cond.k} targets={len(self.targets)}>"

    @property
    def uses_gibbs(self) -> bool:
        return self.cond.k > 1 and self.exact is None

    def block_sampler(self, block: Block, /) -> BlockSampler:
        sampler = self._samplers.get(block)
        if sampler is None:
            sampler = BlockSampler(
                self.model, self.cond, block, self.free, origin=self.origin, ridge=self.config.ridge
            )
            with self._lock:
                self._samplers[block] = sampler
        return sampler

    def draw_partition(self, rng: np.random.Generator) -> Partition:
        if self.cond.k == 1:
            return Partition((1,))
        if self.exact is not None:
            return self.exact.sample(rng)
        chain = self.config.chain
        return GibbsSampler(self.cache).run(chain.burn_in + chain.thinning, rng)

    def simulate(self, rng: np.random.Generator, *, replicate: int | None = None) -> ConditionalRealization:
        timings: dict[SamplerStep, float] = {}
        m = len(self.free)

        start = time.perf_counter()
        try:
            tau = self.draw_partition(rng)
        except SamplerStepError as err:
            raise err.with_replicate(replicate) from err.__cause__
        except MaxCondError as err:
            raise SamplerStepError("partition", replicate=replicate, reason=str(err)) from err
        timings["partition"] = time.perf_counter() - start

        start = time.perf_counter()
        upper = np.zeros(m)
        attempts: list[int] = []
        try:
            for block in tau.blocks if m else ():
                values, tries = self.block_sampler(block).draw(rng, self.config.rejection_cap)
                upper = values if not attempts else np.maximum(upper, values)
                attempts.append(tries)
        except MaxCondError as err:
            raise SamplerStepError("extremal", replicate=replicate, reason=str(err)) from err
        timings["extremal"] = time.perf_counter() - start

        start = time.perf_counter()
        lower = Realization(np.zeros(m), 0)
        try:
            if self.spectral is not None:
                lower = _sub_extremal(self.spectral, self.cond.z, m, rng, self.config.truncation, floor=upper)
        except MaxCondError as err:
            raise SamplerStepError("sub-extremal", replicate=replicate, reason=str(err)) from err
        timings["sub-extremal"] = time.perf_counter() - start

        values = np.empty(len(self.targets))
        values[self.layout.free] = np.maximum(upper, lower.values[:m])
        for target, site in self.layout.repeated.items():
            values[target] = self.cond.z[site]

        LOGGER.debug(
            "Replicate %s: scenario %s, %d atoms, timings %s",
            replicate,
            tau,
            lower.n_atoms,
            ", ".join(f"{step}={seconds:.3f}s" for step, seconds in timings.items()),
        )
        return ConditionalRealization(
            values,
            tau,
            lower.n_atoms,
            tuple(attempts),
            exhausted=lower.exhausted,
            timings=timings,
            replicate=replicate,
        )


def conditional_simulate(
    model: DependenceModel,
    cond: ConditioningSet,
    s: SiteSet,
    config: SimulationConfig | None = None,
    rng: np.random.Generator | None = None,
    *,
    replicate: int | None = None,
) -> ConditionalRealization:
    settings = config or SimulationConfig()
    stream = rng if rng is not None else settings.stream(replicate or 0)
    return ConditionalSimulator(model, cond, s, settings).simulate(stream, replicate=replicate)


def exponent_measure(
    model: DependenceModel,
    sites: SiteSet,
    c: ArrayLike,
    qmc: QMCSettings | None = None,
    *,
    seed: int = 0,
) -> float:
    """``V(c) = -log P(Z(sites) ≤ c)``; infinite entries of ``c`` drop out."""
    values = np.atleast_1d(np.asarray(c, dtype=np.float64))
    if values.shape != (len(sites),):
        msg = f"Expected {len(sites)} thresholds, got shape {values.shape}"
        raise DomainError(msg)
    if np.any(values <= 0):
        return math.inf

    n = len(sites)
    if model.is_brown_resnick:
        gamma = semivariogram(sites.distances(), model)
    else:
        rho = correlation(sites.distances(), model)

    total = 0.0
    for i in range(n):
        if not math.isfinite(values[i]):
            continue
        others = np.array([j for j in range(n) if j != i], dtype=np.intp)
        if not others.size:
            total += 1.0 / values[i]
            continue

        stream = np.random.SeedSequence(seed, spawn_key=(i,))
        lower = np.full(others.size, -np.inf)
        if model.is_brown_resnick:
            g = gamma[i, others]
            cov = g[:, None] + g[None, :] - gamma[np.ix_(others, others)]
            p = mvn_rect_prob(-g, cov, lower, np.log(values[others] / values[i]), qmc, rng=stream)
        else:
            r = rho[i, others]
            spread = 1.0 - r**2
            upper = (values[others] / values[i] - r) * np.sqrt(2.0 / spread)
            partial = (rho[np.ix_(others, others)] - np.outer(r, r)) / np.sqrt(np.outer(spread, spread))
            np.fill_diagonal(partial, 1.0)
            p = mvt_rect_prob(2, np.zeros(others.size), partial, lower, upper, qmc, rng=stream)
        total += p.value / values[i]
    return total


def conditional_cdf(
    model: DependenceModel,
    cond: ConditioningSet,
    s: SiteSet,
    a: ArrayLike,
    config: SimulationConfig | None = None,
) -> float:
    """``P(Z(s) ≤ a | Z(x) = z)`` by enumerating every hitting scenario.

    Each scenario contributes the probability that all its extremal functions stay below ``a``;
    the sub-extremal part contributes ``exp{V(z) - V(a, z)}``.
    """
    settings = config or SimulationConfig()
    thresholds = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if thresholds.shape != (len(s),):
        msg = f"Expected {len(s)} thresholds, got shape {thresholds.shape}"
        raise DomainError(msg)
    if np.any(np.isnan(thresholds)):
        raise DomainError("Thresholds must not be NaN.")
    if cond.k > min(5, MAX_EXACT_K):
        msg = f"Closed form conditional distribution needs at most 5 conditioning sites, got {cond.k}"
        raise CapacityError(msg)
    if np.any(thresholds <= 0):
        return 0.0

    layout = _Layout.build(s, cond.x, settings.epsilon)
    for target, site in layout.repeated.items():
        if thresholds[target] < cond.z[site]:
            return 0.0
    free = s.subset(layout.free)
    bounds = thresholds[layout.free]
    if not len(free):
        return 1.0

    joint = free.concat(cond.x)
    origin = resolve_origin(joint) if model.is_brown_resnick else None
    qmc = settings.qmc
    below = math.exp(
        exponent_measure(model, cond.x, cond.z, qmc, seed=settings.seed)
        - exponent_measure(model, joint, np.concatenate([bounds, cond.z]), qmc, seed=settings.seed)
    )

    cache = WeightCache(model, cond.x, cond.z, qmc, seed=settings.seed, origin=origin)
    scenarios = exact_scenario_distribution(model, cond.x, cond.z, cache=cache)
    m = len(free)
    factors: dict[Block, float] = {}

    def extremal_below(block: Block) -> float:
        if block in factors:
            return factors[block]
        rest = [i for i in range(cond.k) if i not in block]
        law = conditional_law(
            free.concat(cond.x.subset(rest)), cond.x.subset(block), cond.z[list(block)], model, origin=origin
        )
        stream = np.random.SeedSequence(settings.seed, spawn_key=(len(cond.x), *block))
        joint_upper = np.concatenate([bounds, cond.z[rest]])
        numerator = law.probability_below(joint_upper, qmc, rng=stream).value
        denominator = 1.0
        if rest:
            denominator = law.marginal(range(m, m + len(rest))).probability_below(cond.z[rest], qmc, rng=stream).value
        factors[block] = min(numerator / denominator, 1.0) if denominator > 0 else 0.0
        return factors[block]

    total = math.fsum(p * math.prod(extremal_below(block) for block in tau.blocks) for tau, p in scenarios)
    return min(max(below * total, 0.0), 1.0)
