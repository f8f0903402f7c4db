"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import asyncio
import logging
import sys
from typing import TYPE_CHECKING, Any

from .formats import TabularData, to_json

if TYPE_CHECKING:
    import argparse
    import pathlib
    from collections.abc import AsyncIterator, Callable, Iterable, Sequence

    import numpy as np

    from .config import RunConfig

__all__ = ("RunContext",)

LOGGER = logging.getLogger(__name__)


class RunContext:
    """What a command gets handed: the resolved config, its output directory and the replicate streams."""

    __slots__ = ("args", "command", "config", "output", "quiet")

    def __init__(self, config: RunConfig, args: argparse.Namespace) -> None:
        self.config: RunConfig = config
        self.args: argparse.Namespace = args
        self.command: str = args.command
        self.quiet: bool = getattr(args, "quiet", False)
        self.output: pathlib.Path = config.output
        self.output.mkdir(parents=True, exist_ok=True)

    def __repr__(self) -> str:
        return f"<RunContext command={self.command!r} seed={self.config.seed} output={str(self.output)!r}>"

    def path(self, name: str, /) -> pathlib.Path:
        return self.output / name

    def stream(self, replicate: int, /) -> np.random.Generator:
        return self.config.simulation.stream(replicate)

    def send(self, content: str, /) -> None:
        if not self.quiet:
            sys.stdout.write(content.rstrip("\n") + "\n")

    def send_table(self, headers: Sequence[str], rows: Iterable[Iterable[object]], *, title: str | None = None) -> None:
        table = TabularData()
        table.set_columns(headers)
        table.add_rows(rows)
        self.send(f"{title}\n{table.render()}" if title else table.render())

    def write_json(self, name: str, obj: Any, /) -> pathlib.Path:
        path = self.path(name)
        path.write_text(to_json(obj) + "\n", encoding="utf-8")
        return path

    async def replicates[T](self, work: Callable[[int], T], count: int | None = None) -> AsyncIterator[tuple[int, T]]:
        """Run ``work(replicate)`` in worker threads and yield the results in replicate order.

        At most ``config.workers`` replicates run at once. Consumers should wrap the iterator in
        :func:`contextlib.aclosing` so pending replicates are cancelled if they stop early.
        """
        total = self.config.replicates if count is None else count
        semaphore = asyncio.Semaphore(self.config.workers)

        async def guarded(replicate: int) -> T:
            async with semaphore:
                return await asyncio.to_thread(work, replicate)

        tasks = [asyncio.create_task(guarded(r), name=f"replicate-{r}") for r in range(total)]
        LOGGER.info("Dispatched %d replicate(s) over %d worker(s)", total, self.config.workers)
        try:
            for replicate, task in enumerate(tasks):
                yield replicate, await task
        finally:
            for task in tasks:
                task.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)
