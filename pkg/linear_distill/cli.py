import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import click
from click.core import ParameterSource

from .version import __version__

from_manifest_option = click.option(
    "--from-manifest",
    type=click.Path(path_type=Path),
    help="Repeat a previous run from its manifest.yaml (or output directory).",
)


class ClickLogHandler(logging.Handler):
    def emit(self, record: logging.LogRecord) -> None:
        try:
            msg = self.format(record)
            click.echo(msg)
        except Exception:
            self.handleError(record)


def prefer_recorded(
    ctx: click.Context, recorded: Mapping[str, Any], **values: Any
) -> dict[str, Any]:
    """`values`, with every option left at its default taken from `recorded`"""
    merged = dict(values)
    for name in values:
        source = ctx.get_parameter_source(name)
        if name in recorded and source in (None, ParameterSource.DEFAULT):
            merged[name] = recorded[name]
    return merged


def _log_level(verbosity: int) -> int:
    if verbosity < -1:
        return logging.CRITICAL
    if verbosity == -1:
        return logging.WARNING
    if verbosity == 0:
        return logging.INFO
    return logging.DEBUG


@click.group()
@click.option(
    "-v",
    "--verbose",
    count=True,
    type=int,
    default=0,
    help="Give more output. Option is additive, and can be used up to 2 times.",
)
@click.option(
    "-q",
    "--quiet",
    count=True,
    type=int,
    default=0,
    help="Give less output. Option is additive, and can be used up to 2 times.",
)
@click.version_option(
    version=__version__, message="linear-distill package version: %(version)s"
)
def main(
    verbose: int,
    quiet: int,
) -> None:
    """
    Distil attention teachers into linear-time scan students, and measure
    what the linear mixer buys.
    """
    handler = ClickLogHandler()
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    handler.setLevel(_log_level(verbose - quiet))

    root_logger = logging.getLogger()
    for old in [h for h in root_logger.handlers if isinstance(h, ClickLogHandler)]:
        root_logger.removeHandler(old)
    root_logger.setLevel(logging.DEBUG)
    root_logger.addHandler(handler)
