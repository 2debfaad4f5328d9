import logging
import sys
from collections.abc import MutableMapping, Sequence
from pathlib import Path
from typing import Any

import click
import toml

from .cli import main
from .const import EX_CONFIG, EX_OK
from .distill.config import PRESETS, ConfigError, parse_overrides, resolve_config
from .utils import exit_on_error

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = "linear-distill.toml"


@main.group()
def config() -> None:
    """
    Distillation configuration files.
    """
    pass


@config.command("init")
@click.argument(
    "path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=DEFAULT_CONFIG_FILE,
)
@click.option(
    "--preset",
    type=click.Choice(sorted(PRESETS)),
    default="default",
    show_default=True,
)
def config_init(path: Path, preset: str) -> None:
    """
    Write every configuration key of PRESET to a flat TOML file.

    Keys already present in PATH keep their values.
    """
    values: MutableMapping[str, Any] = {}
    with exit_on_error({ConfigError: EX_CONFIG}):
        if path.exists():
            with path.open("r") as f:
                values = toml.load(f)
        defaults = PRESETS[preset].to_dict()
        added = [key for key in defaults if key not in values]
        for key in added:
            values[key] = defaults[key]
        # validate the merged file before writing it
        resolve_config(preset, overrides=values)
        with path.open("w") as f:
            toml.dump(values, f)
    logger.info(f"Added {len(added)} key(s) to {path}")
    sys.exit(EX_OK)


@config.command("show")
@click.option(
    "--preset",
    type=click.Choice(sorted(PRESETS)),
    default="default",
    show_default=True,
)
@click.option(
    "-c",
    "--config",
    "config_file",
    type=click.Path(dir_okay=False, path_type=Path),
)
@click.option("-s", "--set", "overrides", metavar="KEY=VALUE", multiple=True)
def config_show(
    preset: str, config_file: Path | None, overrides: Sequence[str]
) -> None:
    """
    Print the configuration a distill run would resolve, as TOML.
    """
    with exit_on_error({ConfigError: EX_CONFIG}):
        cfg = resolve_config(preset, config_file, parse_overrides(overrides))
    click.echo(toml.dumps(cfg.to_dict()), nl=False)
    sys.exit(EX_OK)
