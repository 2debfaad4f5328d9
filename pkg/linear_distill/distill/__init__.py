import csv
import logging
import sys
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import click

from ..checkpoint import (
    CheckpointError,
    CheckpointWriteError,
    load_checkpoint,
    save_checkpoint,
)
from ..cli import from_manifest_option, main, prefer_recorded
from ..const import (
    EX_CANTCREAT,
    EX_CONFIG,
    EX_DATAERR,
    EX_IOERR,
    EX_NOINPUT,
    EX_OK,
    EX_SOFTWARE,
)
from ..data.common import DataError, DataNotFoundError, DataSource, open_source
from ..manifest import ManifestError, RunManifest, load_manifest
from ..model import MODEL_PRESETS
from ..tensor import NonFiniteError
from ..utils import exit_on_error, make_out_dir
from .ablation import (
    ABLATION_FILE,
    AXIS_CELLS,
    AblationAxis,
    cell_means,
    run_ablation,
    seeds_where_best,
)
from .config import (
    PRESETS,
    ConfigError,
    DistillConfig,
    from_mapping,
    parse_overrides,
    resolve_config,
)
from .teacher import PretrainMetrics, pretrain_teacher
from .train import METRICS_FILE, STUDENT_FILE, TEACHER_FILE, distill_run

logger = logging.getLogger(__name__)

PRETRAIN_FILE = "pretrain.csv"
TEACHER_CHECKPOINT_KEY = "teacher_checkpoint"

ERROR_CODES: dict[type[Exception], int] = {
    ConfigError: EX_CONFIG,
    ManifestError: EX_CONFIG,
    DataNotFoundError: EX_NOINPUT,
    DataError: EX_DATAERR,
    CheckpointError: EX_DATAERR,
    NonFiniteError: EX_SOFTWARE,
    CheckpointWriteError: EX_CANTCREAT,
    OSError: EX_IOERR,
}


def _open_data(cfg: DistillConfig) -> DataSource:
    model = cfg.teacher_config()
    return open_source(cfg.data, model.image_size, model.channels, cfg.seed)


def _explicit(
    steps: int | None, seed: int | None, data: str | None
) -> dict[str, Any]:
    flags = {"steps": steps, "seed": seed, "data": data}
    return {key: value for key, value in flags.items() if value is not None}


def _resolve(
    preset: str,
    config_file: Path | None,
    overrides: Sequence[str],
    explicit: dict[str, Any],
    recorded: Mapping[str, Any] | None,
) -> DistillConfig:
    values = parse_overrides(overrides)
    if recorded is not None:
        cfg = from_mapping(recorded)
        cfg = from_mapping(values, base=cfg) if values else cfg
    else:
        cfg = resolve_config(preset, config_file, values)
    return from_mapping(explicit, base=cfg) if explicit else cfg


preset_option = click.option(
    "--preset",
    type=click.Choice(sorted(PRESETS)),
    default="default",
    show_default=True,
    help="Named base configuration.",
)
steps_option = click.option(
    "--steps", type=click.IntRange(min=0), help="Number of training steps."
)
seed_option = click.option("--seed", type=click.IntRange(min=0), help="Run seed.")
data_option = click.option(
    "--data",
    metavar="SOURCE",
    help="'synthetic', 'synthetic:SEED' or a directory of netpbm images.",
)


@main.command("distill")
@preset_option
@click.option(
    "-c",
    "--config",
    "config_file",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Flat TOML file with configuration keys.",
)
@click.option(
    "-s",
    "--set",
    "overrides",
    metavar="KEY=VALUE",
    multiple=True,
    help="Override a configuration key. Use multiple options for more keys.",
)
@from_manifest_option
@data_option
@click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("runs/distill"),
    show_default=True,
    help="Output directory; relative paths honour $LINEAR_DISTILL_OUT_ROOT.",
)
@steps_option
@seed_option
@click.option(
    "--teacher",
    "teacher_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Teacher checkpoint; by default the teacher is pretrained inline "
    "(teacher_steps > 0) or left at random initialisation.",
)
def distill_command(
    preset: str,
    config_file: Path | None,
    overrides: Sequence[str],
    from_manifest: Path | None,
    data: str | None,
    out: Path,
    steps: int | None,
    seed: int | None,
    teacher_path: Path | None,
) -> None:
    """
    Distil an attention teacher into a Mamba-2 student.

    Writes manifest.yaml, metrics.csv and student.json under OUT.
    """
    if from_manifest is not None and config_file is not None:
        raise click.UsageError("--from-manifest and --config are exclusive")
    with exit_on_error(ERROR_CODES):
        manifest = load_manifest(from_manifest, "distill")
        recorded = manifest.config if manifest is not None else None
        cfg = _resolve(
            preset, config_file, overrides, _explicit(steps, seed, data), recorded
        )
        if teacher_path is None and manifest is not None:
            checkpoint = manifest.artifacts.get(TEACHER_CHECKPOINT_KEY)
            teacher_path = Path(checkpoint) if checkpoint else None
        out_dir = make_out_dir(out)
        artifacts = {"metrics": METRICS_FILE, "student": STUDENT_FILE}
        if teacher_path is not None:
            artifacts[TEACHER_CHECKPOINT_KEY] = str(teacher_path.resolve())
        elif cfg.teacher_steps > 0:
            artifacts["teacher"] = TEACHER_FILE
        RunManifest("distill", cfg.seed, cfg.to_dict(), artifacts).save(out_dir)
        logger.info(f"Resolved config: {cfg}")

        teacher = load_checkpoint(teacher_path) if teacher_path else None
        source = _open_data(cfg)
        result = distill_run(cfg, source, out_dir, teacher=teacher)
    if result.rows:
        first, last = result.rows[0], result.rows[-1]
        click.echo(
            f"alignment {first['alignment']:.4f} -> {last['alignment']:.4f}, "
            f"loss {first['loss']:.5f} -> {last['loss']:.5f}"
        )
    click.echo(f"Artifacts written to {out_dir}")
    sys.exit(EX_OK)


def _parse_seeds(seeds: str) -> list[int]:
    try:
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    except ValueError:
        raise click.BadParameter(
            f"expected comma-separated integers, got {seeds!r}", param_hint="--seeds"
        ) from None
    if not seed_list or any(s < 0 for s in seed_list):
        raise click.BadParameter("at least one seed >= 0 needed", param_hint="--seeds")
    return seed_list


@main.command("ablate")
@click.option(
    "--axis",
    type=click.Choice([a.value for a in AblationAxis]),
    help="Which component of the objective to vary; required without "
    "--from-manifest.",
)
@click.option(
    "--preset",
    type=click.Choice(sorted(PRESETS)),
    default="toy",
    show_default=True,
    help="Named base configuration.",
)
@click.option(
    "-s",
    "--set",
    "overrides",
    metavar="KEY=VALUE",
    multiple=True,
    help="Override a configuration key of every cell.",
)
@click.option(
    "--seeds",
    help="Comma-separated seeds; every cell runs once per seed.  [default: 0]",
)
@from_manifest_option
@steps_option
@data_option
@click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("runs/ablate"),
    show_default=True,
    help="Output directory; relative paths honour $LINEAR_DISTILL_OUT_ROOT.",
)
def ablate_command(
    axis: str | None,
    preset: str,
    overrides: Sequence[str],
    seeds: str | None,
    from_manifest: Path | None,
    steps: int | None,
    data: str | None,
    out: Path,
) -> None:
    """
    Run one ablation grid of the distillation objective at toy scale.

    Writes ablation.csv with the final loss and alignment of every cell.
    """
    seed_list = _parse_seeds(seeds) if seeds is not None else None
    with exit_on_error(ERROR_CODES):
        manifest = load_manifest(from_manifest, "ablate")
        recorded: dict[str, Any] | None = None
        if manifest is not None:
            recorded = dict(manifest.config)
            axis = axis or recorded.pop("axis", None)
            if axis not in {a.value for a in AblationAxis}:
                raise ManifestError(f"Manifest {from_manifest} has no valid axis")
            seeds_recorded = recorded.pop("seeds", [manifest.seed])
            seed_list = seed_list or [int(s) for s in seeds_recorded]
        if axis is None:
            raise click.UsageError("Missing option '--axis'")
        seed_list = seed_list or [0]
        explicit = _explicit(steps, None, data)
        base = _resolve(preset, None, overrides, explicit, recorded)
        out_dir = make_out_dir(out)
        RunManifest(
            "ablate",
            seed_list[0],
            {**base.to_dict(), "axis": axis, "seeds": seed_list},
            {"ablation": ABLATION_FILE},
        ).save(out_dir)
        rows = run_ablation(axis, base, seed_list, out_dir, _open_data)

    click.echo(f"{'cell':<14} {'loss':>10} {'alignment':>10}")
    for cell, (loss, alignment) in cell_means(rows).items():
        click.echo(f"{cell:<14} {loss:>10.5f} {alignment:>10.4f}")
    cells = list(AXIS_CELLS[AblationAxis(axis)])
    if AblationAxis(axis) is AblationAxis.COMPONENTS:
        wins = seeds_where_best(rows, "both", [c for c in cells if c != "both"])
        click.echo(f"'both' aligns best on {wins}/{len(seed_list)} seed(s)")
    sys.exit(EX_OK)


@main.group()
def teacher() -> None:
    """
    Attention teacher operations.
    """
    pass


@teacher.command("pretrain")
@click.option(
    "--model",
    type=click.Choice(sorted(k for k in MODEL_PRESETS if k.startswith("teacher"))),
    default="teacher-toy",
    show_default=True,
    help="Teacher model preset.",
)
@click.option(
    "--steps", type=click.IntRange(min=0), default=100, show_default=True
)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option(
    "--batch-size", type=click.IntRange(min=1), default=16, show_default=True
)
@click.option("--lr", type=click.FloatRange(min=0.0), default=1e-3, show_default=True)
@click.option(
    "--data",
    metavar="SOURCE",
    default="synthetic",
    show_default=True,
    help="'synthetic', 'synthetic:SEED' or a directory of netpbm images.",
)
@click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("runs/teacher"),
    show_default=True,
)
@from_manifest_option
@click.pass_context
def teacher_pretrain(
    ctx: click.Context,
    model: str,
    steps: int,
    seed: int,
    batch_size: int,
    lr: float,
    data: str,
    out: Path,
    from_manifest: Path | None,
) -> None:
    """
    Train a teacher briefly on the labelled images of SOURCE.

    The classification head is dropped; OUT/teacher.json holds the backbone.
    """
    with exit_on_error(ERROR_CODES):
        manifest = load_manifest(from_manifest, "teacher pretrain")
        if manifest is not None:
            recorded = {**manifest.config, "seed": manifest.seed}
            values = prefer_recorded(
                ctx,
                recorded,
                model=model,
                steps=steps,
                seed=seed,
                batch_size=batch_size,
                lr=lr,
                data=data,
            )
            model, data = str(values["model"]), str(values["data"])
            steps, seed = int(values["steps"]), int(values["seed"])
            batch_size, lr = int(values["batch_size"]), float(values["lr"])
            if model not in MODEL_PRESETS:
                raise ManifestError(f"Manifest {from_manifest}: unknown model {model}")
        config = MODEL_PRESETS[model]
        out_dir = make_out_dir(out)
        settings = {
            "model": model,
            "steps": steps,
            "batch_size": batch_size,
            "lr": lr,
            "data": data,
        }
        RunManifest(
            "teacher pretrain",
            seed,
            settings,
            {"teacher": TEACHER_FILE, "metrics": PRETRAIN_FILE},
        ).save(out_dir)
        source = open_source(data, config.image_size, config.channels, seed)
        with (out_dir / PRETRAIN_FILE).open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "loss", "accuracy", "lr"])

            def on_step(m: PretrainMetrics) -> None:
                writer.writerow([m.step, repr(m.loss), repr(m.accuracy), repr(m.lr)])

            model_out, _ = pretrain_teacher(
                config, source, steps, batch_size, seed, lr=lr, on_step=on_step
            )
        path = save_checkpoint(model_out, out_dir / TEACHER_FILE)
    click.echo(f"Teacher checkpoint written to {path}")
    sys.exit(EX_OK)


__all__ = [
    "ablate_command",
    "distill_command",
    "teacher",
    "teacher_pretrain",
]
