"""
This Source Code Form is subject to the terms of the Mozilla Public
License, v. 2.0. If a copy of the MPL was not distributed with this
file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""

from __future__ import annotations

import argparse
import asyncio
import importlib
import logging
import pathlib
from logging.handlers import RotatingFileHandler
from typing import TYPE_CHECKING

try:
    import uvloop
except ModuleNotFoundError:
    RUNTIME = asyncio.run
else:
    RUNTIME = uvloop.run

from commands import COMMANDS
from utilities.config import CONFIG_PATH, load_config
from utilities.context import RunContext
from utilities.errors import MaxCondError, SamplerStepError

if TYPE_CHECKING:
    from collections.abc import Sequence
    from typing import Self

LOGGER = logging.getLogger("maxcond")


class LogHandler:
    def __init__(self, *, stream: bool = True, level: int = logging.INFO) -> None:
        self.log: logging.Logger = logging.getLogger()
        self.max_bytes: int = 32 * 1024 * 1024
        self.logging_path = pathlib.Path("./logs/")
        self.logging_path.mkdir(exist_ok=True)
        self.stream: bool = stream
        self.level: int = level
        self._handlers: list[logging.Handler] = []

        self.info = self.log.info
        self.error = self.log.error
        self.warning = self.log.warning
        self.debug = self.log.debug

    async def __aenter__(self) -> Self:
        return self.__enter__()

    def __enter__(self: Self) -> Self:
        logging.getLogger("asyncio").setLevel(logging.WARNING)

        self.log.setLevel(self.level)
        handler = RotatingFileHandler(
            filename=self.logging_path / "maxcond.log",
            encoding="utf-8",
            mode="w",
            maxBytes=self.max_bytes,
            backupCount=5,
        )
        dt_fmt = "%Y-%m-%d %H:%M:%S"
        fmt = logging.Formatter("[{asctime}] [{levelname:<7}] {name}: {message}", dt_fmt, style="{")
        handler.setFormatter(fmt)
        self._handlers.append(handler)

        if self.stream:
            stream_handler = logging.StreamHandler()
            stream_handler.setFormatter(fmt)
            self._handlers.append(stream_handler)

        for hdlr in self._handlers:
            self.log.addHandler(hdlr)
        return self

    async def __aexit__(self, *args: object) -> None:
        return self.__exit__(*args)

    def __exit__(self, *args: object) -> None:
        for hdlr in self._handlers:
            hdlr.close()
            self.log.removeHandler(hdlr)
        self._handlers.clear()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxcond",
        description="Conditional simulation of Brown-Resnick and Schlather max-stable random fields.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log to the file only and print nothing")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=pathlib.Path, default=CONFIG_PATH, help="JSON or TOML run config")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", type=pathlib.Path, help="output directory, overrides the config")
    common.add_argument("--replicates", type=int, help="overrides the config replicate count")

    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")
    for command in COMMANDS:
        importlib.import_module(command.name).setup(subparsers, common)
    return parser


async def dispatch(args: argparse.Namespace) -> None:
    config = load_config(args.config, seed=args.seed, out=args.out, replicates=args.replicates)
    ctx = RunContext(config, args)
    LOGGER.info("Running %s with %r", args.command, ctx)
    await args.handler(ctx)


async def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.INFO

    async with LogHandler(stream=not args.quiet, level=level) as log_handler:
        for command in COMMANDS:
            log_handler.debug("Loaded %scommand: %s", "package " if command.ispkg else "", command.name)
        try:
            await dispatch(args)
        except MaxCondError as err:
            log_handler.error("%s failed: %s", args.command, err, exc_info=isinstance(err, SamplerStepError))
            return 1
        except Exception:
            log_handler.log.exception("Unexpected error while running %s", args.command)
            raise
    return 0


def run(argv: Sequence[str] | None = None) -> None:
    raise SystemExit(RUNTIME(main(argv)))


if __name__ == "__main__":
    run()
