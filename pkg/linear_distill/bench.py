"""Runtime and memory of the two token mixers as the sequence grows

Each point times one mixer forward (no gradient recording) on a fixed
random input: a few warmup calls, then `reps` timed calls with
`time.perf_counter`, reporting median and interquartile range. Transient
memory comes from one extra call under the allocation meter and excludes
the inputs and the output buffer.
"""

import csv
import json
import logging
import math
import sys
import time
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import click
import numpy as np

from .cli import from_manifest_option, main, prefer_recorded
from .const import EX_CONFIG, EX_OK
from .manifest import ManifestError, RunManifest, load_manifest
from .mixers import AttentionParams, Mamba2Params, MixerKind, mixer_forward
from .tensor import Tensor, measure_allocations, no_grad
from .utils import exit_on_error, make_out_dir, rng_for

logger = logging.getLogger(__name__)

MIN_REPS = 11
MIN_WARMUP = 3
MIN_FIT_POINTS = 4
MIN_FIT_SPAN = 8.0
DEFAULT_LENGTHS = (256, 512, 1024, 2048, 4096)
INPUT_STREAM = 1
PARAM_STREAM = 2

BENCH_FILE = "bench.csv"
SPEEDUP_FILE = "speedup.csv"
BENCH_HEADER = ("mixer", "L", "d", "median_s", "iqr_s", "transient_bytes")
SPEEDUP_HEADER = ("L", "ratio")

Mixer = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class BenchPoint:
    mixer: str
    L: int
    d: int
    median_s: float
    iqr_s: float
    transient_bytes: int

    def as_row(self) -> list[str]:
        return [
            self.mixer,
            str(self.L),
            str(self.d),
            repr(self.median_s),
            repr(self.iqr_s),
            str(self.transient_bytes),
        ]


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    r2: float


def bench_input(length: int, dim: int, seed: int = 0) -> Tensor:
    """Deterministic per (length, seed)"""
    return Tensor(rng_for(seed, INPUT_STREAM, length).normal(size=(length, dim)))


def make_mixer(kind: MixerKind | str, dim: int, seed: int = 0) -> Mixer:
    rng = rng_for(seed, PARAM_STREAM, dim)
    params: AttentionParams | Mamba2Params
    if MixerKind(kind) is MixerKind.ATTENTION:
        params = AttentionParams.init(dim, rng)
    else:
        params = Mamba2Params.init(dim, rng)
    return lambda x: mixer_forward(x, params)


def _check_lengths(lengths: Sequence[int]) -> None:
    if not lengths or any(n < 1 for n in lengths):
        raise ValueError(f"sequence lengths must be >= 1, got {list(lengths)}")
    if list(lengths) != sorted(set(lengths)):
        raise ValueError(f"sequence lengths must be ascending, got {list(lengths)}")


def transient_bytes(mixer: Mixer, x: Tensor) -> int:
    """Peak of simultaneously live buffers during one call, minus the output"""
    with no_grad(), measure_allocations() as meter:
        y = mixer(x)
        out_bytes = int(y.data.nbytes)
    return max(0, meter.peak_bytes - out_bytes)


def time_call(mixer: Mixer, x: Tensor, reps: int, warmup: int) -> list[float]:
    times = []
    with no_grad():
        for _ in range(warmup):
            mixer(x)
        for _ in range(reps):
            start = time.perf_counter()
            mixer(x)
            times.append(time.perf_counter() - start)
    return times


def run_sweep(
    kind: MixerKind | str,
    dim: int,
    lengths: Sequence[int],
    reps: int = MIN_REPS,
    warmup: int = MIN_WARMUP,
    seed: int = 0,
    mixer: Mixer | None = None,
    label: str | None = None,
) -> list[BenchPoint]:
    """Time `kind` (or an explicit `mixer`) at every sequence length"""
    if reps < MIN_REPS:
        raise ValueError(f"reps must be >= {MIN_REPS}, got {reps}")
    if warmup < MIN_WARMUP:
        raise ValueError(f"warmup must be >= {MIN_WARMUP}, got {warmup}")
    _check_lengths(lengths)
    name = label or MixerKind(kind).value
    if mixer is None:
        mixer = make_mixer(kind, dim, seed)
    points = []
    for length in lengths:
        x = bench_input(length, dim, seed)
        times = time_call(mixer, x, reps, warmup)
        q1, median, q3 = np.percentile(times, [25, 50, 75])
        point = BenchPoint(
            name,
            length,
            dim,
            float(median),
            float(q3 - q1),
            transient_bytes(mixer, x),
        )
        logger.info(
            f"{name} L={length} d={dim}: median {point.median_s * 1e3:.3f} ms, "
            f"IQR {point.iqr_s * 1e3:.3f} ms, transient {point.transient_bytes} B"
        )
        points.append(point)
    return points


def fit_exponent(points: Sequence[BenchPoint]) -> ScalingFit:
    """Least-squares slope of log(median runtime) against log(L)"""
    lengths = sorted({p.L for p in points})
    if len(lengths) < MIN_FIT_POINTS:
        raise ValueError(
            f"fit needs >= {MIN_FIT_POINTS} distinct lengths, got {len(lengths)}"
        )
    if lengths[-1] < MIN_FIT_SPAN * lengths[0]:
        raise ValueError(
            f"lengths must span >= {MIN_FIT_SPAN:g}x, got {lengths[0]}..{lengths[-1]}"
        )
    log_l = np.log([p.L for p in points])
    log_t = np.log([p.median_s for p in points])
    slope, intercept = np.polyfit(log_l, log_t, 1)
    residual = log_t - (slope * log_l + intercept)
    ss_res = float(np.sum(residual**2))
    ss_tot = float(np.sum((log_t - log_t.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), r2)


def speedup_report(
    attention: Sequence[BenchPoint], scan: Sequence[BenchPoint]
) -> list[tuple[int, float]]:
    """attention / scan median runtime per sequence length"""
    grid_a = [p.L for p in attention]
    grid_s = [p.L for p in scan]
    if grid_a != grid_s:
        raise ValueError(f"length grids differ: {grid_a} vs {grid_s}")
    return [(a.L, a.median_s / s.median_s) for a, s in zip(attention, scan)]


def per_token_spread(points: Sequence[BenchPoint]) -> float:
    """max/min of runtime per token; close to 1 for a linear-time mixer"""
    per_token = [p.median_s / p.L for p in points]
    low = min(per_token)
    return max(per_token) / low if low > 0 else math.inf


def write_points(path: Path, points: Sequence[BenchPoint]) -> Path:
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(BENCH_HEADER)
        writer.writerows(p.as_row() for p in points)
    return path


def write_speedup(path: Path, ratios: Sequence[tuple[int, float]]) -> Path:
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SPEEDUP_HEADER)
        writer.writerows([str(n), repr(r)] for n, r in ratios)
    return path


def write_jsonl(path: Path, records: Sequence[dict[str, object]]) -> Path:
    with path.open("w") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
    return path


def check_fit_lengths(lengths: Sequence[int]) -> None:
    _check_lengths(lengths)
    if len(lengths) < MIN_FIT_POINTS:
        raise ValueError(
            f"the exponent fit needs >= {MIN_FIT_POINTS} lengths, got {len(lengths)}"
        )
    if lengths[-1] < MIN_FIT_SPAN * lengths[0]:
        raise ValueError(f"lengths must span >= {MIN_FIT_SPAN:g}x for the exponent fit")


def _parse_lengths(
    ctx: click.Context, param: click.Parameter, value: str
) -> list[int]:
    try:
        lengths = [int(v) for v in value.split(",") if v.strip()]
        check_fit_lengths(lengths)
    except ValueError as e:
        raise click.BadParameter(str(e)) from None
    return lengths


@main.command("bench")
@click.option(
    "-d", "--d", "dim", type=click.IntRange(min=1), default=64, show_default=True
)
@click.option(
    "--lengths",
    default=",".join(str(n) for n in DEFAULT_LENGTHS),
    show_default=True,
    callback=_parse_lengths,
    help="Comma-separated ascending sequence lengths (>= 4, spanning >= 8x).",
)
@click.option(
    "--reps",
    type=click.IntRange(min=MIN_REPS),
    default=MIN_REPS,
    show_default=True,
    help="Timed repetitions per point.",
)
@click.option(
    "--warmup",
    type=click.IntRange(min=MIN_WARMUP),
    default=MIN_WARMUP,
    show_default=True,
    help="Untimed calls before timing.",
)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("runs/bench"),
    show_default=True,
    help="Output directory; relative paths honour $LINEAR_DISTILL_OUT_ROOT.",
)
@click.option(
    "--json",
    "as_json",
    is_flag=True,
    default=False,
    help="Also write the records as JSON lines.",
)
@from_manifest_option
@click.pass_context
def bench(
    ctx: click.Context,
    dim: int,
    lengths: list[int],
    reps: int,
    warmup: int,
    seed: int,
    out: Path,
    as_json: bool,
    from_manifest: Path | None,
) -> None:
    """
    Sweep attention and the Mamba-2 scan over sequence lengths.

    Writes bench.csv and speedup.csv, then prints the fitted scaling exponents.
    """
    with exit_on_error({ManifestError: EX_CONFIG, ValueError: EX_CONFIG}):
        manifest = load_manifest(from_manifest, "bench")
        if manifest is not None:
            recorded = {**manifest.config, "seed": manifest.seed}
            recorded["dim"] = recorded.pop("d", dim)
            values = prefer_recorded(
                ctx,
                recorded,
                dim=dim,
                lengths=lengths,
                reps=reps,
                warmup=warmup,
                seed=seed,
            )
            dim, seed = int(values["dim"]), int(values["seed"])
            reps, warmup = int(values["reps"]), int(values["warmup"])
            lengths = [int(n) for n in values["lengths"]]
            check_fit_lengths(lengths)
            as_json = as_json or "points_json" in manifest.artifacts
    out_dir = make_out_dir(out)
    artifacts = {"points": BENCH_FILE, "speedup": SPEEDUP_FILE}
    if as_json:
        artifacts.update(points_json="bench.jsonl", speedup_json="speedup.jsonl")
    settings = {"d": dim, "lengths": lengths, "reps": reps, "warmup": warmup}
    RunManifest("bench", seed, settings, artifacts).save(out_dir)

    attention = run_sweep(MixerKind.ATTENTION, dim, lengths, reps, warmup, seed)
    scan = run_sweep(MixerKind.MAMBA2, dim, lengths, reps, warmup, seed)
    ratios = speedup_report(attention, scan)
    write_points(out_dir / BENCH_FILE, attention + scan)
    write_speedup(out_dir / SPEEDUP_FILE, ratios)
    if as_json:
        write_jsonl(out_dir / "bench.jsonl", [asdict(p) for p in attention + scan])
        write_jsonl(
            out_dir / "speedup.jsonl", [{"L": n, "ratio": r} for n, r in ratios]
        )

    for name, points in (("attention", attention), ("mamba2", scan)):
        fit = fit_exponent(points)
        click.echo(f"{name:<10} exponent {fit.exponent:.3f}  r2 {fit.r2:.4f}")
    for length, ratio in ratios:
        click.echo(f"L={length:<6} speedup {ratio:.2f}x")
    click.echo(f"mamba2 per-token time varies {per_token_spread(scan):.2f}x")
    click.echo(f"Results written to {out_dir}")
    sys.exit(EX_OK)
