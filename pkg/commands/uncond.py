"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import asyncio
import logging
from contextlib import aclosing
from typing import TYPE_CHECKING

import numpy as np

from utilities.formats import ReplicateWriter
from utilities.simulation import SpectralSampler

from ._campaign import REPLICATES_FILE, summarize

if TYPE_CHECKING:
    import argparse

    from utilities.context import RunContext
    from utilities.simulation import Realization

LOGGER = logging.getLogger(__name__)


def setup(subparsers: argparse._SubParsersAction[argparse.ArgumentParser], parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "uncond",
        parents=[parent],
        help="simulate the max-stable field on the target sites",
        description="Approximate unconditional realizations by a truncated Poisson spectral construction.",
    )
    parser.set_defaults(handler=run)


async def run(ctx: RunContext) -> None:
    config = ctx.config
    sites = config.targets()
    sampler = await asyncio.to_thread(SpectralSampler, config.model, sites, ridge=config.simulation.ridge)
    policy = config.simulation.truncation

    def work(replicate: int) -> Realization:
        return sampler.unconditional(ctx.stream(replicate), policy)

    samples = np.empty((config.replicates, len(sites)))
    exhausted = 0
    with ReplicateWriter(ctx.path(REPLICATES_FILE), sites.labels) as writer:
        async with aclosing(ctx.replicates(work)) as results:
            async for replicate, realization in results:
                samples[replicate] = config.margins.from_frechet(realization.values, sites)
                writer.write(replicate, samples[replicate])
                exhausted += realization.exhausted

    if exhausted:
        LOGGER.warning("%d of %d replicate(s) hit the atom budget before the stopping rule", exhausted, config.replicates)
    summarize(ctx, sites, samples)
