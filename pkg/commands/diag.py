"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import asyncio
import logging
from typing import TYPE_CHECKING

from utilities.errors import ConfigurationError
from utilities.formats import write_table
from utilities.geometry import resolve_origin
from utilities.partitions import (
    MAX_EXACT_K,
    WeightCache,
    coclustering_matrix,
    exact_scenario_distribution,
    gibbs_chain,
    partition_size_histogram,
)

if TYPE_CHECKING:
    import argparse

    from utilities.context import RunContext

LOGGER = logging.getLogger(__name__)


def setup(subparsers: argparse._SubParsersAction[argparse.ArgumentParser], parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "diag",
        parents=[parent],
        help="run a long Gibbs chain over hitting scenarios and compare it with enumeration",
        description="Writes the chain trace, the partition size histogram and site co-clustering frequencies.",
    )
    parser.set_defaults(handler=run)


async def run(ctx: RunContext) -> None:
    config = ctx.config
    settings = config.simulation
    cond = config.conditioning_set()
    if cond.k < 2:
        raise ConfigurationError(
            "Chain diagnostics need at least two conditioning sites.", path=config.source, field="conditioning"
        )

    origin = resolve_origin(cond.x) if config.model.is_brown_resnick else None
    cache = WeightCache(config.model, cond.x, cond.z, settings.qmc, seed=settings.seed, origin=origin)
    chain = await asyncio.to_thread(
        gibbs_chain, config.model, cond.x, cond.z, settings.chain, ctx.stream(0), cache=cache
    )

    write_table(ctx.path("trace.csv"), ["iteration", "partition", "size"], chain.rows())

    histogram = partition_size_histogram(chain)
    write_table(ctx.path("partition_sizes.csv"), ["size", "frequency"], histogram.items())
    ctx.send_table(["size", "frequency"], histogram.items(), title=f"Partition size over {len(chain)} states:")

    matrix = coclustering_matrix(chain)
    labels = cond.x.labels
    rows = ([label, *row] for label, row in zip(labels, matrix, strict=True))
    write_table(ctx.path("coclustering.csv"), ["label", *labels], rows)

    summary: dict[str, object] = {
        "sites": cond.k,
        "iterations": settings.chain.length,
        "burn_in": settings.chain.burn_in,
        "thinning": settings.chain.thinning,
        "states": len(chain),
        "acceptance_rate": chain.acceptance_rate,
        "weight_cache": {"blocks": len(cache), "max_relative_error": cache.max_relative_error()},
    }

    if cond.k <= min(settings.exact_k_threshold, MAX_EXACT_K):
        exact = await asyncio.to_thread(exact_scenario_distribution, config.model, cond.x, cond.z, cache=cache)
        frequencies = chain.frequencies()
        scenarios = [(str(tau), tau.size, p, frequencies.get(tau, 0.0)) for tau, p in exact]
        write_table(ctx.path("exact.csv"), ["partition", "size", "probability", "empirical"], scenarios)
        tv = exact.total_variation(frequencies)
        summary["total_variation"] = tv
        ctx.send_table(
            ["partition", "size", "exact", "chain"], scenarios, title=f"Hitting scenarios (total variation {tv:.4f}):"
        )
        LOGGER.info("Total variation between the chain and enumeration over %d scenarios: %.4f", len(exact), tv)
    else:
        LOGGER.info("Skipping enumeration, %d sites exceed the exact threshold", cond.k)

    ctx.write_json("diag.json", summary)
