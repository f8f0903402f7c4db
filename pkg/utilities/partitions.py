"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import logging
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import special

from .errors import CapacityError, ConfigurationError, DomainError, MaxCondError, SamplerStepError
from .geometry import resolve_origin
from .intensity import BlockWeight, block_weight

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Sequence
    from typing import Self

    from numpy.typing import ArrayLike, NDArray

    from .geometry import DependenceModel, SiteSet
    from .rectangle import QMCSettings

__all__ = (
    "ChainSettings",
    "GibbsChain",
    "GibbsSampler",
    "Partition",
    "ScenarioDistribution",
    "WeightCache",
    "canonicalize",
    "coclustering_matrix",
    "enumerate_partitions",
    "exact_scenario_distribution",
    "gibbs_chain",
    "gibbs_kernel",
    "neighbor_moves",
    "partition_size_histogram",
)

LOGGER = logging.getLogger(__name__)

MAX_ENUMERATION_K = 12
MAX_EXACT_K = 6

type Block = tuple[int, ...]


@dataclass(frozen=True, slots=True, order=True)
class Partition:
    """A set partition of ``k`` sites as a restricted growth string ``(a_1, ..., a_k)``.

    Labels are 1-based, site indices are 0-based.
    """

    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        labels = tuple(int(a) for a in self.labels)
        if not labels:
            raise DomainError("A partition needs at least one site.")
        highest = 0
        for a in labels:
            if not 1 <= a <= highest + 1:
                msg = f"{labels} is not a restricted growth string, use canonicalize()"
                raise DomainError(msg)
            highest = max(highest, a)
        object.__setattr__(self, "labels", labels)

    def __str__(self) -> str:
        return "-".join(map(str, self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def parse(cls, value: str, /) -> Self:
        try:
            return cls(tuple(int(part) for part in value.split("-")))
        except ValueError:
            msg = f"Cannot read a partition from {value!r}"
            raise DomainError(msg) from None

    @classmethod
    def singletons(cls, k: int) -> Self:
        return cls(tuple(range(1, k + 1)))

    @classmethod
    def single_block(cls, k: int) -> Self:
        return cls((1,) * k)

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return max(self.labels)

    @property
    def blocks(self) -> tuple[Block, ...]:
        """Site indices of each block, in label order."""
        members: list[list[int]] = [[] for _ in range(self.size)]
        for i, a in enumerate(self.labels):
            members[a - 1].append(i)
        return tuple(tuple(block) for block in members)

    def block_of(self, j: int, /) -> Block:
        return self.blocks[self.labels[j] - 1]


def canonicalize(labels: Iterable[int]) -> Partition:
    """Relabel by order of first appearance: ``(2, 2, 1)`` becomes ``(1, 1, 2)``."""
    seen: dict[int, int] = {}
    out: list[int] = []
    for a in labels:
        if a < 1:
            msg = f"Partition labels must be positive integers, got {a}"
            raise DomainError(msg)
        out.append(seen.setdefault(a, len(seen) + 1))
    return Partition(tuple(out))


def _restricted_growth_strings(k: int) -> Iterator[tuple[int, ...]]:
    labels = [1] * k
    highest = [1] * k
    while True:
        yield tuple(labels)
        i = k - 1
        while i > 0 and labels[i] > highest[i - 1]:
            i -= 1
        if i == 0:
            return
        labels[i] += 1
        highest[i] = max(highest[i - 1], labels[i])
        for j in range(i + 1, k):
            labels[j] = 1
            highest[j] = highest[i]


def enumerate_partitions(k: int) -> list[Partition]:
    """All ``Bell(k)`` partitions of ``k`` sites in lexicographic order."""
    if k < 1:
        msg = f"Cannot enumerate partitions of {k} sites"
        raise DomainError(msg)
    if k > MAX_ENUMERATION_K:
        msg = f"Enumerating partitions of {k} > {MAX_ENUMERATION_K} sites is not supported"
        raise CapacityError(msg)
    return [Partition(labels) for labels in _restricted_growth_strings(k)]


@dataclass(frozen=True, slots=True)
class _Move:
    label: int
    result: Partition
    r1: int
    r2: int


def _moves(tau: Partition, j: int) -> Iterator[_Move]:
    if not 0 <= j < tau.k:
        msg = f"Site index {j} outside 0..{tau.k - 1}"
        raise DomainError(msg)

    a = tau.labels[j]
    counts = Counter(tau.labels)
    r1 = counts[a]
    for b in range(1, tau.size + 2):
        r2 = counts.get(b, 0)
        labels = list(tau.labels)
        labels[j] = b
        star = canonicalize(labels)
        if r1 == 1 and r2 == 0:
            # x_j alone in a fresh block is the current scenario again
            assert star == tau, (tau, j, star)
            continue
        yield _Move(b, star, r1, r2)


def neighbor_moves(tau: Partition, j: int) -> list[tuple[int, Partition]]:
    """Scenarios reachable by relabelling site ``j``, paired with the new block label.

    ``j`` is a 0-based index into the conditioning sites, so ``j = 0`` is the first site ``x_1``.
    Block labels stay 1-based as in the growth string.
    """
    return [(move.label, move.result) for move in _moves(tau, j)]


class WeightCache:
    """Block weights keyed by the sorted site indices of the block.

    The rectangle probability of each block is integrated with a stream derived from
    ``(seed, block)``, so a weight is the same no matter when, where or how often it is computed.
    """

    def __init__(
        self,
        model: DependenceModel,
        x: SiteSet,
        z: ArrayLike,
        qmc: QMCSettings | None = None,
        *,
        seed: int = 0,
        origin: ArrayLike | None = None,
    ) -> None:
        self.model: DependenceModel = model
        self.x: SiteSet = x
        self.z: NDArray[np.float64] = np.asarray(z, dtype=np.float64)
        self.qmc: QMCSettings | None = qmc
        self.seed: int = seed
        self.origin: NDArray[np.float64] | None = (
            (resolve_origin(x) if origin is None else np.asarray(origin, dtype=np.float64))
            if model.is_brown_resnick
            else None
        )
        self.hits: int = 0
        self.misses: int = 0
        self._weights: dict[Block, BlockWeight] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._weights)

    def __repr__(self) -> str:
        return f"<WeightCache blocks={len(self)} hits={self.hits} misses={self.misses}>"

    @property
    def k(self) -> int:
        return len(self.x)

    def get(self, block: Iterable[int], /) -> BlockWeight:
        key: Block = tuple(sorted(block))
        cached = self._weights.get(key)
        if cached is not None:
            self.hits += 1
            return cached

        stream = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))
        weight = block_weight(self.model, self.x, self.z, key, self.qmc, origin=self.origin, rng=stream)
        with self._lock:
            self.misses += 1
            self._weights.setdefault(key, weight)
        if weight.relative_error > 0.05:
            LOGGER.debug("Weight of block %s has relative QMC error %.3g", key, weight.relative_error)
        return weight

    def log_weight(self, block: Iterable[int], /) -> float:
        return self.get(block).log_weight

    def log_scenario_weight(self, tau: Partition, /) -> float:
        return math.fsum(self.log_weight(block) for block in tau.blocks)

    def max_relative_error(self) -> float:
        return max((w.relative_error for w in self._weights.values() if w.log_weight > -math.inf), default=0.0)


def _log_move_weight(cache: WeightCache, tau: Partition, j: int, move: _Move) -> float:
    """log π(τ*) - log π(τ); only the blocks that gave or received site ``j`` contribute."""
    a = tau.labels[j]
    if move.label == a:
        return 0.0

    old_a = tau.block_of(j)
    old_b = tau.blocks[move.label - 1] if move.r2 else ()
    new_b = tuple(sorted((*old_b, j)))
    new_a = tuple(i for i in old_a if i != j)

    if move.r1 == 1:
        return cache.log_weight(new_b) - cache.log_weight(old_b) - cache.log_weight(old_a)
    if move.r2:
        return cache.log_weight(new_b) + cache.log_weight(new_a) - cache.log_weight(old_b) - cache.log_weight(old_a)
    return cache.log_weight(new_b) + cache.log_weight(new_a) - cache.log_weight(old_a)


def _transition(cache: WeightCache, tau: Partition, j: int) -> tuple[list[Partition], NDArray[np.float64]]:
    moves = list(_moves(tau, j))
    logs = np.array([_log_move_weight(cache, tau, j, move) for move in moves])
    return [move.result for move in moves], np.exp(logs - special.logsumexp(logs))


@dataclass(frozen=True, slots=True, eq=False)
class ScenarioDistribution:
    partitions: tuple[Partition, ...]
    probabilities: NDArray[np.float64]

    def __iter__(self) -> Iterator[tuple[Partition, float]]:
        return zip(self.partitions, map(float, self.probabilities), strict=True)

    def __len__(self) -> int:
        return len(self.partitions)

    def probability_of(self, tau: Partition, /) -> float:
        try:
            return float(self.probabilities[self.partitions.index(tau)])
        except ValueError:
            return 0.0

    def sample(self, rng: np.random.Generator) -> Partition:
        return self.partitions[int(rng.choice(len(self.partitions), p=self.probabilities))]

    def total_variation(self, frequencies: dict[Partition, float], /) -> float:
        support = set(self.partitions) | set(frequencies)
        return 0.5 * math.fsum(abs(self.probability_of(tau) - frequencies.get(tau, 0.0)) for tau in support)


def exact_scenario_distribution(
    model: DependenceModel,
    x: SiteSet,
    z: ArrayLike,
    config: QMCSettings | None = None,
    *,
    seed: int = 0,
    origin: ArrayLike | None = None,
    cache: WeightCache | None = None,
) -> ScenarioDistribution:
    """π_x(z, τ) over every hitting scenario, by full enumeration."""
    k = len(x)
    if k > MAX_EXACT_K:
        msg = f"Exact scenario distribution is limited to {MAX_EXACT_K} conditioning sites, got {k}"
        raise CapacityError(msg)

    cache = cache or WeightCache(model, x, z, config, seed=seed, origin=origin)
    partitions = enumerate_partitions(k)
    logs = np.array([cache.log_scenario_weight(tau) for tau in partitions])
    if not np.any(np.isfinite(logs)):
        raise DomainError("Every hitting scenario has zero weight.")

    probabilities = np.exp(logs - special.logsumexp(logs))
    return ScenarioDistribution(tuple(partitions), probabilities / probabilities.sum())


def gibbs_kernel(
    model: DependenceModel,
    x: SiteSet,
    z: ArrayLike,
    config: QMCSettings | None = None,
    *,
    seed: int = 0,
    origin: ArrayLike | None = None,
    cache: WeightCache | None = None,
) -> tuple[list[Partition], NDArray[np.float64]]:
    """Transition matrix of the random scan sampler over all scenarios (small ``k`` only)."""
    k = len(x)
    cache = cache or WeightCache(model, x, z, config, seed=seed, origin=origin)
    partitions = enumerate_partitions(k)
    index = {tau: i for i, tau in enumerate(partitions)}
    kernel = np.zeros((len(partitions), len(partitions)))
    for row, tau in enumerate(partitions):
        if not math.isfinite(cache.log_scenario_weight(tau)):
            kernel[row, row] = 1.0
            continue
        for j in range(k):
            targets, probabilities = _transition(cache, tau, j)
            for target, p in zip(targets, probabilities, strict=True):
                kernel[row, index[target]] += p / k
    return partitions, kernel


@dataclass(frozen=True, slots=True)
class ChainSettings:
    length: int = 100_500
    burn_in: int = 500
    thinning: int = 100

    def __post_init__(self) -> None:
        if self.burn_in < 0:
            raise ConfigurationError("Burn-in cannot be negative.", field="chain.burn_in")
        if self.thinning < 1:
            raise ConfigurationError("Thinning must be at least 1.", field="chain.thinning")
        if self.length < self.burn_in:
            msg = f"Chain length {self.length} is shorter than its burn-in {self.burn_in}"
            raise ConfigurationError(msg, field="chain.length")

    @property
    def n_states(self) -> int:
        return (self.length - self.burn_in) // self.thinning

    def records(self, t: int, /) -> bool:
        return t > self.burn_in and (t - self.burn_in) % self.thinning == 0


@dataclass(slots=True)
class GibbsChain:
    k: int
    settings: ChainSettings
    states: list[Partition] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    moves: int = 0
    cache: WeightCache | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def acceptance_rate(self) -> float:
        return self.moves / self.settings.length if self.settings.length else 0.0

    def frequencies(self) -> dict[Partition, float]:
        if not self.states:
            return {}
        counts = Counter(self.states)
        return {tau: n / len(self.states) for tau, n in sorted(counts.items())}

    def rows(self) -> Iterator[tuple[int, str, int]]:
        for t, tau in zip(self.iterations, self.states, strict=True):
            yield t, str(tau), tau.size


class GibbsSampler:
    """Uniform random scan Gibbs sampler over hitting scenarios."""

    def __init__(self, cache: WeightCache, initial: Partition | None = None) -> None:
        if cache.k < 2:
            raise DomainError("The hitting scenario of a single conditioning site is deterministic.")
        self.cache: WeightCache = cache
        self.state: Partition = initial or self._initial_state()
        self.moves: int = 0

    def _initial_state(self) -> Partition:
        for candidate in (Partition.singletons(self.cache.k), Partition.single_block(self.cache.k)):
            if math.isfinite(self.cache.log_scenario_weight(candidate)):
                return candidate
        raise DomainError("Neither the singleton nor the single block scenario has positive weight.")

    def step(self, rng: np.random.Generator) -> Partition:
        j = int(rng.integers(self.cache.k))
        targets, probabilities = _transition(self.cache, self.state, j)
        chosen = targets[int(rng.choice(len(targets), p=probabilities))]
        if chosen != self.state:
            self.moves += 1
        self.state = chosen
        return chosen

    def run(self, steps: int, rng: np.random.Generator) -> Partition:
        for t in range(1, steps + 1):
            try:
                self.step(rng)
            except MaxCondError as err:
                raise SamplerStepError("partition", reason=f"iteration {t}: {err}") from err
        return self.state


def gibbs_chain(
    model: DependenceModel,
    x: SiteSet,
    z: ArrayLike,
    config: ChainSettings | None = None,
    rng: np.random.Generator | None = None,
    *,
    qmc: QMCSettings | None = None,
    seed: int = 0,
    origin: ArrayLike | None = None,
    cache: WeightCache | None = None,
    initial: Partition | None = None,
) -> GibbsChain:
    settings = config or ChainSettings()
    rng = rng if rng is not None else np.random.default_rng(seed)
    cache = cache or WeightCache(model, x, z, qmc, seed=seed, origin=origin)

    sampler = GibbsSampler(cache, initial)
    chain = GibbsChain(cache.k, settings, cache=cache)
    for t in range(1, settings.length + 1):
        try:
            sampler.step(rng)
        except MaxCondError as err:
            raise SamplerStepError("partition", reason=f"iteration {t}: {err}") from err
        if settings.records(t):
            chain.states.append(sampler.state)
            chain.iterations.append(t)

    chain.moves = sampler.moves
    LOGGER.info(
        "Gibbs chain over %d sites: %d iterations, %d states kept, acceptance %.3f, weight cache %d hits / %d misses",
        cache.k,
        settings.length,
        len(chain),
        chain.acceptance_rate,
        cache.hits,
        cache.misses,
    )
    return chain


def _states(chain: GibbsChain | Sequence[Partition]) -> Sequence[Partition]:
    states = chain.states if isinstance(chain, GibbsChain) else chain
    if not states:
        raise DomainError("Chain has no recorded states.")
    return states


def partition_size_histogram(chain: GibbsChain | Sequence[Partition]) -> dict[int, float]:
    """Relative frequency of each scenario size ``1..k``."""
    states = _states(chain)
    counts = Counter(tau.size for tau in states)
    return {size: counts.get(size, 0) / len(states) for size in range(1, states[0].k + 1)}


def coclustering_matrix(chain: GibbsChain | Sequence[Partition]) -> NDArray[np.float64]:
    """Frequency with which two conditioning sites are hit by the same extremal function."""
    states = _states(chain)
    labels = np.array([tau.labels for tau in states])
    return (labels[:, :, None] == labels[:, None, :]).mean(axis=0)
