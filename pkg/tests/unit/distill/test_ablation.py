import csv
from pathlib import Path

import pytest

from linear_distill.distill.ablation import (
    ABLATION_FILE,
    ABLATION_HEADER,
    AXIS_CELLS,
    AblationAxis,
    AblationRow,
    cell_configs,
    cell_means,
    run_ablation,
    seeds_where_best,
)
from linear_distill.distill.config import PRESETS, DistillConfig
from linear_distill.distill.train import METRICS_FILE


@pytest.fixture
def base() -> DistillConfig:
    return PRESETS["smoke"].replace(steps=2)


@pytest.mark.parametrize(
    "axis,cells",
    [
        (AblationAxis.MASK_STRATEGY, ["block_wise", "token_wise"]),
        (AblationAxis.MATCHING_SCOPE, ["class_only", "visible_only", "all"]),
        (AblationAxis.COMPONENTS, ["mask_only", "act_only", "both"]),
    ],
)
def test_axis_cells(axis: AblationAxis, cells: list[str]) -> None:
    assert list(AXIS_CELLS[axis]) == cells


def test_cell_configs_apply_changes(base: DistillConfig) -> None:
    cells = cell_configs("components", base)
    assert not cells["mask_only"].use_activation_matching
    assert not cells["act_only"].use_masked_prediction
    assert cells["both"] == base
    scopes = cell_configs(AblationAxis.MATCHING_SCOPE, base)
    assert {c.matching_scope for c in scopes.values()} == {
        "class_only",
        "visible_only",
        "all",
    }


def test_unknown_axis(base: DistillConfig) -> None:
    with pytest.raises(ValueError):
        cell_configs("optimizer", base)


@pytest.mark.parametrize("axis", list(AblationAxis))
def test_run_ablation_writes_one_row_per_cell(
    axis: AblationAxis, base: DistillConfig, tmp_path: Path
) -> None:
    rows = run_ablation(axis, base, [0], tmp_path)
    assert [r.cell for r in rows] == list(AXIS_CELLS[axis])
    with (tmp_path / ABLATION_FILE).open() as f:
        table = list(csv.reader(f))
    assert tuple(table[0]) == ABLATION_HEADER
    assert len(table) == 1 + len(AXIS_CELLS[axis])
    for cell in AXIS_CELLS[axis]:
        assert (tmp_path / f"{cell}-seed0" / METRICS_FILE).exists()


def _row(cell: str, seed: int, alignment: float, loss: float = 1.0) -> AblationRow:
    return AblationRow("components", cell, seed, loss, 0.0, alignment)


def test_cell_means_average_over_seeds() -> None:
    rows = [
        _row("both", 0, 0.4, 2.0),
        _row("both", 1, 0.6, 4.0),
        _row("act_only", 0, 0.5),
    ]
    means = cell_means(rows)
    assert list(means) == ["both", "act_only"]
    assert means["both"] == pytest.approx((3.0, 0.5))


def test_seeds_where_best() -> None:
    rows = [
        _row("both", 0, 0.9),
        _row("act_only", 0, 0.8),
        _row("mask_only", 0, 0.1),
        _row("both", 1, 0.5),
        _row("act_only", 1, 0.7),
        _row("mask_only", 1, 0.2),
        _row("both", 2, 0.6),
        _row("act_only", 2, 0.6),
        _row("mask_only", 2, 0.3),
    ]
    assert seeds_where_best(rows, "both", ["act_only", "mask_only"]) == 2


def test_row_is_written_with_full_precision() -> None:
    row = AblationRow("mask_strategy", "token_wise", 3, 0.1 + 0.2, 0.25, 1 / 3)
    assert row.as_csv() == [
        "mask_strategy",
        "token_wise",
        "3",
        repr(0.1 + 0.2),
        "0.25",
        repr(1 / 3),
    ]
