"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from utilities.formats import pointwise_quantiles, write_quantiles

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray

    from utilities.context import RunContext
    from utilities.geometry import SiteSet

__all__ = ("REPLICATES_FILE", "QUANTILES_FILE", "summarize")

REPLICATES_FILE = "replicates.csv"
QUANTILES_FILE = "quantiles.csv"


def summarize(
    ctx: RunContext,
    sites: SiteSet,
    samples: NDArray[np.float64],
    *,
    extra: Mapping[str, NDArray[np.float64]] | None = None,
) -> NDArray[np.float64]:
    """Write the pointwise quantile file and print a short table for small site sets."""
    probabilities = ctx.config.quantiles
    quantiles = pointwise_quantiles(samples, probabilities)
    write_quantiles(
        ctx.path(QUANTILES_FILE),
        sites,
        quantiles,
        probabilities,
        n_replicates=samples.shape[0],
        extra=extra,
    )

    if len(sites) <= 12:
        ctx.send_table(
            ["site", *(f"q{p:g}" for p in probabilities)],
            ([label, *quantiles[:, i]] for i, label in enumerate(sites.labels)),
            title=f"Pointwise quantiles over {samples.shape[0]} replicate(s):",
        )
    else:
        ctx.send(
            f"{samples.shape[0]} replicate(s) at {len(sites)} sites; "
            f"median of pointwise medians {float(np.median(pointwise_quantiles(samples, [0.5])[0])):.4f}"
        )
    return quantiles
