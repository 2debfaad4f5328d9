import contextlib
import logging
import os
import sys
from collections.abc import Iterator, Mapping
from pathlib import Path

import click
import numpy as np

logger = logging.getLogger(__name__)

OUT_ROOT_ENV = "LINEAR_DISTILL_OUT_ROOT"


def resolve_out_dir(out: Path | str) -> Path:
    """Relative `--out` paths are placed under $LINEAR_DISTILL_OUT_ROOT if set"""
    path = Path(out)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
        logger.debug(f"Output directory resolved under {OUT_ROOT_ENV}: {path}")
    return path


def make_out_dir(out: Path | str) -> Path:
    path = resolve_out_dir(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent PCG64 stream per (seed, *stream)"""
    return np.random.default_rng([seed, *stream])


@contextlib.contextmanager
def exit_on_error(codes: Mapping[type[Exception], int]) -> Iterator[None]:
    """Turn library errors into sysexits codes, first matching type wins

    Anything unmapped is logged with its traceback and re-raised as a
    `click.ClickException`.
    """
    try:
        yield
    except click.ClickException:
        raise
    except Exception as e:
        for kind, code in codes.items():
            if isinstance(e, kind):
                logger.error(f"{e.__class__.__name__}: {e}")
                sys.exit(code)
        logger.exception(e)
        raise click.ClickException(f"{e.__class__.__name__}: {e}")
