"""Module for common functionality and key abstractions related to image data"""

import abc
import logging
from dataclasses import dataclass
from enum import Flag, auto
from pathlib import Path
from typing import Any

import numpy as np

from ..tensor import Array

logger = logging.getLogger(__name__)

SYNTHETIC_PREFIX = "synthetic"
DEFAULT_SYNTHETIC_SEED = 0


class DataError(ValueError):
    pass


class DataNotFoundError(DataError):
    pass


class DataSourceKind(int, Flag):  # type: ignore
    """Flag enum for data source specs

    Supports comparisons between a particular kind and its category:
    >>> assert DataSourceKind.NETPBM_DIR == DataSourceKind.FILESYSTEM
    >>> assert DataSourceKind.SYNTHETIC == DataSourceKind.SUPPORTED
    """

    SYNTHETIC = auto()
    NETPBM_DIR = auto()
    FILESYSTEM = NETPBM_DIR
    SUPPORTED = SYNTHETIC | NETPBM_DIR
    UNSUPPORTED = ~SUPPORTED  # type:ignore

    def __eq__(self, other: Any) -> bool:
        if isinstance(other, DataSourceKind):
            return bool(self & other)
        return False

    def __hash__(self) -> int:
        return hash(int(self))

    @staticmethod
    def get_kind(spec: str) -> "DataSourceKind":
        """Detect the source kind of a `--data` value"""
        name, _, _ = spec.partition(":")
        if name == SYNTHETIC_PREFIX:
            return DataSourceKind.SYNTHETIC
        if Path(spec).is_dir():
            return DataSourceKind.NETPBM_DIR
        return DataSourceKind.UNSUPPORTED


@dataclass(frozen=True)
class Sample:
    """An H×W×C image with values in [0, 1] and its class label"""

    image: Array
    label: int


class DataSource(metaclass=abc.ABCMeta):
    """Deterministic stream of training batches plus a fixed probe batch"""

    def __init__(self, image_size: int, channels: int, seed: int) -> None:
        self.image_size = image_size
        self.channels = channels
        self.seed = seed

    @property
    @abc.abstractmethod
    def num_classes(self) -> int:
        raise NotImplementedError

    @abc.abstractmethod
    def batch(self, step: int, batch_size: int) -> list[Sample]:
        """Training batch for `step`; identical for identical (seed, step)"""
        raise NotImplementedError

    @abc.abstractmethod
    def probe_batch(self, size: int) -> list[Sample]:
        """Held-out batch that does not change during a run"""
        raise NotImplementedError

    def describe(self) -> str:
        return f"{self.__class__.__name__}(seed={self.seed})"

    def _check_image(self, image: Array, origin: str) -> Array:
        expected = (self.image_size, self.image_size, self.channels)
        if image.shape != expected:
            raise DataError(
                f"{origin}: image of shape {image.shape}, expected {expected}"
            )
        return image


def open_source(
    spec: str, image_size: int, channels: int, seed: int = DEFAULT_SYNTHETIC_SEED
) -> DataSource:
    """Build a data source from `synthetic`, `synthetic:SEED` or a directory

    The explicit seed of `synthetic:SEED` wins over `seed`.
    """
    from .netpbm import NetpbmDirectory
    from .synthetic import SyntheticShapes

    kind = DataSourceKind.get_kind(spec)
    logger.debug(f"Data source kind of {spec!r}: {kind.name}")
    if kind == DataSourceKind.SYNTHETIC:
        _, _, seed_str = spec.partition(":")
        if seed_str:
            try:
                seed = int(seed_str)
            except ValueError:
                raise DataError(f"Invalid synthetic seed in {spec!r}") from None
        return SyntheticShapes(image_size, channels, seed)
    if kind == DataSourceKind.FILESYSTEM:
        return NetpbmDirectory(Path(spec), image_size, channels, seed)
    if not Path(spec).exists():
        raise DataNotFoundError(f"Data source {spec!r} does not exist")
    raise DataError(
        f"Unsupported data source {spec!r}: expected "
        f"'{SYNTHETIC_PREFIX}[:SEED]' or an existing directory"
    )
