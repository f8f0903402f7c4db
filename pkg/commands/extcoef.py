"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import asyncio
import dataclasses
import logging
from contextlib import aclosing
from typing import TYPE_CHECKING

import numpy as np

from utilities.errors import DomainError
from utilities.formats import write_table
from utilities.geometry import SiteSet, empirical_extremal_coefficient, extremal_coefficient, practical_range
from utilities.simulation import SpectralSampler

if TYPE_CHECKING:
    import argparse

    from numpy.typing import NDArray

    from utilities.context import RunContext
    from utilities.simulation import Realization

LOGGER = logging.getLogger(__name__)

EXTCOEF_FILE = "extcoef.csv"


def setup(subparsers: argparse._SubParsersAction[argparse.ArgumentParser], parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "extcoef",
        parents=[parent],
        help="tabulate the extremal coefficient function of the model",
        description="Writes theta(h) on a distance grid, optionally next to estimates from simulated fields.",
    )
    parser.add_argument(
        "--simulate",
        type=int,
        metavar="N",
        help="also estimate theta(h) from N unconditional realizations on a transect",
    )
    parser.set_defaults(handler=run)


async def _empirical(ctx: RunContext, distances: NDArray[np.float64], count: int) -> NDArray[np.float64]:
    """Estimates of θ(h) between the first transect site and every other one."""
    config = ctx.config
    transect = SiteSet(distances.reshape(-1, 1), tuple(f"h{i}" for i in range(distances.size)))
    sampler = await asyncio.to_thread(SpectralSampler, config.model, transect, ridge=config.simulation.ridge)

    def work(replicate: int) -> Realization:
        return sampler.unconditional(ctx.stream(replicate), config.simulation.truncation)

    samples = np.empty((count, distances.size))
    async with aclosing(ctx.replicates(work, count)) as results:
        async for replicate, realization in results:
            samples[replicate] = realization.values
    return np.array([empirical_extremal_coefficient(samples[:, 0], samples[:, i]) for i in range(distances.size)])


async def run(ctx: RunContext) -> None:
    config = ctx.config
    settings = config.extcoef
    if getattr(ctx.args, "simulate", None) is not None:
        settings = dataclasses.replace(settings, simulate=ctx.args.simulate)

    model = config.model
    distances = settings.distances(model)
    theta = np.asarray(extremal_coefficient(distances, model))

    headers = ["distance", "theta"]
    columns = [distances, theta]
    if settings.simulate:
        LOGGER.info("Estimating theta from %d realizations at %d distances", settings.simulate, distances.size)
        empirical = await _empirical(ctx, distances, settings.simulate)
        headers.append("empirical")
        columns.append(empirical)

    rows = list(zip(*columns, strict=True))
    try:
        reach = practical_range(model, settings.level)
    except DomainError:
        comment = f"{model}; theta never reaches {settings.level:g}"
        LOGGER.info("The extremal coefficient of %s stays below %g", model, settings.level)
    else:
        comment = f"{model}; practical range (theta = {settings.level:g}) at h = {reach:.6g}"
        ctx.send(f"Practical extremal range of {model}: {reach:.4f}")

    write_table(ctx.path(EXTCOEF_FILE), headers, rows, comment=comment)
    ctx.send_table(headers, rows[:: max(1, len(rows) // 10)], title="Extremal coefficient:")
