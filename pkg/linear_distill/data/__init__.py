import logging
import sys
from pathlib import Path

import click

from ..cli import main
from ..const import EX_IOERR, EX_OK
from .common import (
    DataError,
    DataNotFoundError,
    DataSource,
    DataSourceKind,
    Sample,
    open_source,
)
from .netpbm import NetpbmDirectory, read_netpbm, write_netpbm
from .synthetic import ShapeKind, SyntheticShapes, synthetic_image

__all__ = [
    "DataError",
    "DataNotFoundError",
    "DataSource",
    "DataSourceKind",
    "NetpbmDirectory",
    "Sample",
    "ShapeKind",
    "SyntheticShapes",
    "open_source",
    "read_netpbm",
    "synthetic_image",
    "write_netpbm",
]

logger = logging.getLogger(__name__)


@main.group()
def data() -> None:
    """
    Desk-scale image data operations.
    """
    pass


@data.command("export-synthetic")
@click.argument("destination", type=click.Path(file_okay=False, path_type=Path))
@click.option(
    "-n", "--count", type=click.IntRange(min=1), default=64, show_default=True
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--image-size", type=click.IntRange(min=1), default=32, show_default=True)
@click.option(
    "--grey",
    is_flag=True,
    default=False,
    help="Write single-channel P5 images instead of RGB P6.",
)
def data_export_synthetic(
    destination: Path, count: int, seed: int, image_size: int, grey: bool
) -> None:
    """
    Write synthetic images as a netpbm directory, one sub-directory per class.
    """
    channels = 1 if grey else 3
    suffix = ".pgm" if grey else ".ppm"
    try:
        for index in range(count):
            image, label = synthetic_image(seed, index, image_size, channels)
            class_dir = destination / ShapeKind(label).name.lower()
            class_dir.mkdir(parents=True, exist_ok=True)
            write_netpbm(class_dir / f"{index:06d}{suffix}", image)
    except OSError as e:
        logger.error(f"Failed to write images to {destination}: {e}")
        sys.exit(EX_IOERR)
    logger.info(f"Wrote {count} images to {destination}")
    sys.exit(EX_OK)
