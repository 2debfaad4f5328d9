import csv
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .cli import from_manifest_option, main, prefer_recorded
from .const import EX_CONFIG, EX_DATAERR, EX_IOERR, EX_NOINPUT, EX_OK
from .data.common import DataError, DataNotFoundError, open_source
from .distill.probe import probe_alignment
from .distill.stages import stage_partition
from .distill.train import check_compatible
from .manifest import ManifestError, RunManifest, load_manifest
from .tensor import Array
from .utils import exit_on_error, make_out_dir

logger = logging.getLogger(__name__)

MAPS_FILE = "activation_maps.npz"
PROBE_FILE = "probe.csv"


@main.command("probe")
@click.option(
    "--teacher",
    "teacher_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Teacher checkpoint; required without --from-manifest.",
)
@click.option(
    "--student",
    "student_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Student checkpoint; required without --from-manifest.",
)
@click.option("--stages", type=click.IntRange(min=1), default=2, show_default=True)
@click.option(
    "--size",
    type=click.IntRange(min=1),
    default=8,
    show_default=True,
    help="Number of probe images.",
)
@click.option("--data", metavar="SOURCE", default="synthetic", show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("runs/probe"),
    show_default=True,
)
@from_manifest_option
@click.pass_context
def probe(
    ctx: click.Context,
    teacher_path: Path | None,
    student_path: Path | None,
    stages: int,
    size: int,
    data: str,
    seed: int,
    out: Path,
    from_manifest: Path | None,
) -> None:
    """
    Compare teacher and student activation maps on held-out images.

    Prints the per-stage alignment and saves both maps of the first image.
    """
    codes = {
        ManifestError: EX_CONFIG,
        CheckpointError: EX_DATAERR,
        DataNotFoundError: EX_NOINPUT,
        DataError: EX_DATAERR,
        ValueError: EX_DATAERR,
        OSError: EX_IOERR,
    }
    with exit_on_error(codes):
        manifest = load_manifest(from_manifest, "probe")
        if manifest is not None:
            recorded = {**manifest.config, "seed": manifest.seed}
            recorded["teacher_path"] = Path(recorded.pop("teacher"))
            recorded["student_path"] = Path(recorded.pop("student"))
            values = prefer_recorded(
                ctx,
                recorded,
                teacher_path=teacher_path,
                student_path=student_path,
                stages=stages,
                size=size,
                data=data,
                seed=seed,
            )
            teacher_path, student_path = values["teacher_path"], values["student_path"]
            stages, size = int(values["stages"]), int(values["size"])
            data, seed = str(values["data"]), int(values["seed"])
        if teacher_path is None or student_path is None:
            raise click.UsageError(
                "--teacher and --student are required without --from-manifest"
            )
        teacher = load_checkpoint(teacher_path)
        student = load_checkpoint(student_path)
        check_compatible(teacher, student)
        out_dir = make_out_dir(out)
        settings = {
            "teacher": str(teacher_path.resolve()),
            "student": str(student_path.resolve()),
            "stages": stages,
            "size": size,
            "data": data,
        }
        RunManifest(
            "probe", seed, settings, {"maps": MAPS_FILE, "alignment": PROBE_FILE}
        ).save(out_dir)
        stage_map = stage_partition(
            teacher.config.num_blocks, student.config.num_blocks, stages
        )
        cfg = teacher.config
        source = open_source(data, cfg.image_size, cfg.channels, seed)
        images = [s.image for s in source.probe_batch(size)]
        result = probe_alignment(teacher, student, images, stage_map)

        arrays: dict[str, Array] = {}
        for k, (tea, stu) in enumerate(result.maps, start=1):
            arrays[f"teacher_stage{k}"] = tea
            arrays[f"student_stage{k}"] = stu
        np.savez(out_dir / MAPS_FILE, **arrays)
        with (out_dir / PROBE_FILE).open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["stage", "alignment"])
            for k, value in enumerate(result.per_stage, start=1):
                writer.writerow([k, repr(value)])

    for k, value in enumerate(result.per_stage, start=1):
        tea_tap = stage_map.teacher_taps[k - 1]
        stu_tap = stage_map.student_taps[k - 1]
        click.echo(
            f"stage {k} (teacher block {tea_tap}, student block {stu_tap}): "
            f"alignment {value:.4f}"
        )
    click.echo(f"mean alignment {result.mean:.4f}")
    sys.exit(EX_OK)
