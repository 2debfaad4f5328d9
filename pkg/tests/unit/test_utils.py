from pathlib import Path

import click
import numpy as np
import pytest

from linear_distill.utils import (
    OUT_ROOT_ENV,
    exit_on_error,
    make_out_dir,
    resolve_out_dir,
    rng_for,
)


def test_relative_out_dir_uses_env_root(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    monkeypatch.setenv(OUT_ROOT_ENV, str(tmp_path))
    assert resolve_out_dir("runs/a") == tmp_path / "runs" / "a"
    absolute = tmp_path / "elsewhere"
    assert resolve_out_dir(absolute) == absolute
    assert make_out_dir("runs/b").is_dir()


def test_out_dir_without_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv(OUT_ROOT_ENV, raising=False)
    assert resolve_out_dir("runs/a") == Path("runs/a")


def test_rng_streams_are_independent() -> None:
    assert rng_for(1, 2).random() == rng_for(1, 2).random()
    assert rng_for(1, 2).random() != rng_for(1, 3).random()
    assert isinstance(rng_for(0), np.random.Generator)


def test_exit_on_error_maps_first_match() -> None:
    with pytest.raises(SystemExit) as exc_info:
        with exit_on_error({KeyError: 65, LookupError: 66}):
            raise KeyError("x")
    assert exc_info.value.code == 65


def test_exit_on_error_wraps_unknown() -> None:
    with pytest.raises(click.ClickException, match="RuntimeError: boom"):
        with exit_on_error({KeyError: 65}):
            raise RuntimeError("boom")


def test_exit_on_error_keeps_click_errors() -> None:
    with pytest.raises(click.BadParameter):
        with exit_on_error({Exception: 65}):
            raise click.BadParameter("nope")
