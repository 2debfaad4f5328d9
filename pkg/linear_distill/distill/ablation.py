"""Ablation grids over the distillation objective

Each axis is a list of named cells, every cell a set of config changes
applied on top of a base config. Cells that share a seed reuse one teacher.
"""

import csv
import enum
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..data.common import DataSource, open_source
from .config import DistillConfig
from .masking import MaskStrategy
from .train import RunResult, distill_run, prepare_teacher

logger = logging.getLogger(__name__)

ABLATION_FILE = "ablation.csv"
ABLATION_HEADER = ("axis", "cell", "seed", "loss", "alignment_start", "alignment")


class AblationAxis(str, enum.Enum):
    MASK_STRATEGY = "mask_strategy"
    MATCHING_SCOPE = "matching_scope"
    COMPONENTS = "components"


AXIS_CELLS: dict[AblationAxis, dict[str, dict[str, Any]]] = {
    AblationAxis.MASK_STRATEGY: {
        MaskStrategy.BLOCK_WISE.value: {"mask_strategy": "block_wise"},
        MaskStrategy.TOKEN_WISE.value: {"mask_strategy": "token_wise"},
    },
    AblationAxis.MATCHING_SCOPE: {
        "class_only": {"matching_scope": "class_only"},
        "visible_only": {"matching_scope": "visible_only"},
        "all": {"matching_scope": "all"},
    },
    AblationAxis.COMPONENTS: {
        "mask_only": {"use_activation_matching": False},
        "act_only": {"use_masked_prediction": False},
        "both": {},
    },
}


@dataclass(frozen=True)
class AblationRow:
    axis: str
    cell: str
    seed: int
    loss: float
    alignment_start: float
    alignment: float

    def as_csv(self) -> list[str]:
        return [
            self.axis,
            self.cell,
            str(self.seed),
            repr(self.loss),
            repr(self.alignment_start),
            repr(self.alignment),
        ]


def cell_configs(
    axis: AblationAxis | str, base: DistillConfig
) -> dict[str, DistillConfig]:
    cells = AXIS_CELLS[AblationAxis(axis)]
    return {name: base.replace(**changes) for name, changes in cells.items()}


def _row(axis: str, cell: str, seed: int, result: RunResult) -> AblationRow:
    if not result.rows:
        return AblationRow(axis, cell, seed, float("nan"), float("nan"), float("nan"))
    first, last = result.rows[0], result.rows[-1]
    return AblationRow(
        axis, cell, seed, last["loss"], first["alignment"], last["alignment"]
    )


def run_ablation(
    axis: AblationAxis | str,
    base: DistillConfig,
    seeds: Sequence[int],
    out_dir: Path,
    source_factory: Callable[[DistillConfig], DataSource] | None = None,
) -> list[AblationRow]:
    """Distil every cell of `axis` for every seed and write the comparison CSV

    Per-cell metrics and checkpoints go to `<out_dir>/<cell>-seed<seed>/`.
    """
    axis = AblationAxis(axis)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if source_factory is None:
        source_factory = _default_source
    rows: list[AblationRow] = []
    path = out_dir / ABLATION_FILE
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ABLATION_HEADER)
        for seed in seeds:
            seeded = base.replace(seed=seed)
            source = source_factory(seeded)
            teacher = prepare_teacher(seeded, source)
            for cell, cfg in cell_configs(axis, seeded).items():
                logger.info(f"Ablation {axis.value}: cell {cell}, seed {seed}")
                result = distill_run(
                    cfg, source, out_dir / f"{cell}-seed{seed}", teacher=teacher
                )
                row = _row(axis.value, cell, seed, result)
                writer.writerow(row.as_csv())
                f.flush()
                rows.append(row)
    logger.info(f"Wrote {len(rows)} ablation rows to {path}")
    return rows


def _default_source(cfg: DistillConfig) -> DataSource:
    model = cfg.teacher_config()
    return open_source(cfg.data, model.image_size, model.channels, cfg.seed)


def cell_means(rows: Sequence[AblationRow]) -> dict[str, tuple[float, float]]:
    """Mean final (loss, alignment) per cell, in first-seen cell order"""
    grouped: dict[str, list[AblationRow]] = {}
    for row in rows:
        grouped.setdefault(row.cell, []).append(row)
    return {
        cell: (
            sum(r.loss for r in group) / len(group),
            sum(r.alignment for r in group) / len(group),
        )
        for cell, group in grouped.items()
    }


def seeds_where_best(
    rows: Sequence[AblationRow], cell: str, others: Sequence[str]
) -> int:
    """Number of seeds on which `cell` aligns at least as well as every other"""
    by_seed: dict[int, dict[str, float]] = {}
    for row in rows:
        by_seed.setdefault(row.seed, {})[row.cell] = row.alignment
    wins = 0
    for cells in by_seed.values():
        if cell in cells and all(cells[cell] >= cells[o] for o in others if o in cells):
            wins += 1
    return wins
