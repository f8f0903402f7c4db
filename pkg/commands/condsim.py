"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import asyncio
import logging
from collections import Counter, defaultdict
from contextlib import aclosing
from typing import TYPE_CHECKING

import numpy as np

from utilities.formats import ReplicateWriter, pointwise_quantiles, write_table
from utilities.margins import MarginScale
from utilities.simulation import ConditionalSimulator

from ._campaign import REPLICATES_FILE, summarize

if TYPE_CHECKING:
    import argparse

    from utilities.context import RunContext
    from utilities.errors import SamplerStep
    from utilities.simulation import ConditionalRealization

LOGGER = logging.getLogger(__name__)

SIZES_FILE = "partition_sizes.csv"
TIMINGS_FILE = "timings.csv"
SUMMARY_FILE = "condsim.json"


def setup(subparsers: argparse._SubParsersAction[argparse.ArgumentParser], parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "condsim",
        parents=[parent],
        help="simulate the field on the target sites given the conditioning data",
        description=(
            "Draws from the regular conditional distribution: a hitting scenario, the extremal functions "
            "of its blocks, then the sub-extremal field."
        ),
    )
    parser.set_defaults(handler=run)


async def run(ctx: RunContext) -> None:
    config = ctx.config
    cond = config.conditioning_set()
    sites = config.targets()
    simulator = await asyncio.to_thread(ConditionalSimulator, config.model, cond, sites, config.simulation)
    LOGGER.info(
        "Conditioning on %d site(s), hitting scenarios drawn %s",
        cond.k,
        "with the Gibbs sampler" if simulator.uses_gibbs else "exactly",
    )

    def work(replicate: int) -> ConditionalRealization:
        return simulator.simulate(ctx.stream(replicate), replicate=replicate)

    samples = np.empty((config.replicates, len(sites)))
    sizes: Counter[int] = Counter()
    timings: defaultdict[SamplerStep, list[float]] = defaultdict(list)
    exhausted = 0
    block_draws = proposals = 0
    with ReplicateWriter(ctx.path(REPLICATES_FILE), sites.labels) as writer:
        async with aclosing(ctx.replicates(work)) as results:
            async for replicate, realization in results:
                samples[replicate] = config.margins.from_frechet(realization.values, sites)
                writer.write(replicate, samples[replicate])
                sizes[realization.partition.size] += 1
                block_draws += len(realization.rejection_attempts)
                proposals += sum(realization.rejection_attempts)
                for step, seconds in realization.timings.items():
                    timings[step].append(seconds)
                exhausted += realization.exhausted

    if exhausted:
        LOGGER.warning("%d of %d replicate(s) hit the atom budget before the stopping rule", exhausted, config.replicates)

    extra = None
    if config.margins.scale is MarginScale.GEV:
        extra = {"anomaly": pointwise_quantiles(samples, [0.5])[0] - config.margins.medians(sites)}
    summarize(ctx, sites, samples, extra=extra)

    histogram = [(size, sizes[size], sizes[size] / config.replicates) for size in range(1, cond.k + 1)]
    write_table(ctx.path(SIZES_FILE), ["size", "count", "frequency"], histogram)
    ctx.send_table(["size", "count", "frequency"], histogram, title="Partition size distribution:")

    write_table(
        ctx.path(TIMINGS_FILE),
        ["step", "mean_seconds", "std_seconds"],
        ([step, float(np.mean(values)), float(np.std(values))] for step, values in timings.items()),
        comment="wall-clock timings, not reproducible between runs",
    )

    acceptance = block_draws / proposals if proposals else 1.0
    LOGGER.info(
        "Extremal functions: %d block draw(s) from %d proposal(s), acceptance rate %.4f", block_draws, proposals, acceptance
    )
    ctx.write_json(
        SUMMARY_FILE,
        {
            "sites": cond.k,
            "targets": len(sites),
            "replicates": config.replicates,
            "partition_sampler": "gibbs" if simulator.uses_gibbs else "exact",
            "exhausted": exhausted,
            "block_draws": block_draws,
            "proposals": proposals,
            "acceptance_rate": acceptance,
        },
    )
