"""Analytic gradients against central finite differences

Every primitive is checked on small random inputs through a fixed random
linear read-out, then the full distillation objective is checked on a pair
of two-block models with two stages and half of the patches masked.
"""

import logging
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import click
import numpy as np

from .cli import main
from .const import EX_CHECK_FAILED, EX_OK
from .distill.config import DistillConfig
from .distill.masking import MaskSpec
from .distill.stages import stage_partition
from .distill.train import compute_losses
from .mixers import (
    AttentionParams,
    Mamba2Params,
    MixerKind,
    attention_forward,
    mamba2_scan,
)
from .model import Model, ModelConfig, image_tokens, layer_norm
from .tensor import (
    Array,
    Tensor,
    add,
    backward,
    concat_rows,
    div,
    exp,
    expand,
    fill_rows,
    finite_diff_grad,
    gelu,
    log,
    matmul,
    max_relative_error,
    mean,
    mul,
    no_grad,
    normalize_rows,
    reshape,
    row_norms,
    scale,
    smooth_l1,
    softmax_rows,
    softplus,
    sqrt,
    sub,
    sum,
    take_rows,
    transpose,
)
from .utils import rng_for

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5
DEFAULT_TOLERANCE = 1e-6
PARAM_NOISE = 0.3
OBJECTIVE_SCOPES = ("visible_only", "all", "class_only")
PRIMITIVE_SHAPE = (3, 4)
MAX_RANDOM_SIDE = 6

TEACHER_CONFIG = ModelConfig(
    "gradcheck-teacher", 6, 12, 2, 2, 8, MixerKind.ATTENTION, channels=1
)
STUDENT_CONFIG = ModelConfig(
    "gradcheck-student",
    4,
    8,
    2,
    2,
    8,
    MixerKind.MAMBA2,
    channels=1,
    use_mask_token=True,
)


@dataclass(frozen=True)
class GradCheck:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def check_gradients(
    loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = DEFAULT_EPS
) -> float:
    """Worst relative error of backward() against finite differences"""
    for param in params:
        param.grad = None
    backward(loss_fn())
    analytic = [
        p.grad if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    numeric = finite_diff_grad(loss_fn, params, eps)
    return max(max_relative_error(a, n) for a, n in zip(analytic, numeric))


def _readout(
    op: Callable[[], Tensor], rng: np.random.Generator
) -> Callable[[], Tensor]:
    """Scalarise `op` with a fixed random weight of its output shape"""
    with no_grad():
        shape = op().shape
    weight = Tensor(rng.normal(size=shape))
    return lambda: sum(mul(op(), weight))


def _leaf(data: Array) -> Tensor:
    return Tensor(data, requires_grad=True)


def _away_from_kink(rng: np.random.Generator, shape: tuple[int, ...]) -> Array:
    small = rng.uniform(0.1, 0.8, size=shape)
    large = rng.uniform(1.2, 3.0, size=shape)
    signs = rng.choice([-1.0, 1.0], size=shape)
    return np.where(rng.random(shape) < 0.5, small, large) * signs


def primitive_cases(
    rng: np.random.Generator, shape: tuple[int, int] = PRIMITIVE_SHAPE
) -> list[tuple[str, Callable[[], Tensor], list[Tensor]]]:
    """(name, output builder, leaves) for every differentiable primitive

    Operands are `shape` (rows, cols) or derived from it; no operand
    exceeds max(rows, 4) rows.
    """
    m, n = shape
    if m < 2 or n < 2:
        raise ValueError(f"primitive shapes need at least 2×2, got {shape}")
    a = _leaf(rng.normal(size=(m, n)))
    b = _leaf(rng.normal(size=(m, n)))
    pos = _leaf(rng.uniform(0.5, 2.0, size=(m, n)))
    kinked = _leaf(_away_from_kink(rng, (m, n)))
    row = _leaf(rng.normal(size=(1, n)))
    col = _leaf(rng.normal(size=(m, 1)))
    w = _leaf(rng.normal(size=(n, 2)))
    tall = _leaf(rng.normal(size=(max(m, 4), n)))
    gain = _leaf(1.0 + 0.3 * rng.normal(size=(1, n)))
    bias = _leaf(0.3 * rng.normal(size=(1, n)))

    attn_x = _leaf(rng.normal(size=(m, n)))
    attn = AttentionParams(*(_leaf(0.5 * rng.normal(size=(n, n))) for _ in range(3)))
    scan_x = _leaf(rng.normal(size=(m, n)))
    scan = Mamba2Params(
        *(_leaf(0.5 * rng.normal(size=(n, n))) for _ in range(3)),
        _leaf(0.5 * rng.normal(size=(n, 1))),
        _leaf(rng.uniform(0.3, 1.5)),
    )

    cases: list[tuple[str, Callable[[], Tensor], list[Tensor]]] = [
        ("add", lambda: add(a, b), [a, b]),
        ("sub", lambda: sub(a, b), [a, b]),
        ("mul", lambda: mul(a, b), [a, b]),
        ("div", lambda: div(a, pos), [a, pos]),
        ("scale", lambda: scale(a, 1.7), [a]),
        ("exp", lambda: exp(a), [a]),
        ("log", lambda: log(pos), [pos]),
        ("sqrt", lambda: sqrt(pos), [pos]),
        ("softplus", lambda: softplus(a), [a]),
        ("gelu", lambda: gelu(a), [a]),
        ("smooth_l1", lambda: smooth_l1(kinked, 1.0), [kinked]),
        ("sum", lambda: sum(a), [a]),
        ("sum_axis0", lambda: sum(a, axis=0), [a]),
        ("sum_axis1", lambda: sum(a, axis=1), [a]),
        ("mean", lambda: mean(a), [a]),
        ("mean_axis0", lambda: mean(a, axis=0), [a]),
        ("mean_axis1", lambda: mean(a, axis=1), [a]),
        ("expand_row", lambda: expand(row, (m, n)), [row]),
        ("expand_col", lambda: expand(col, (m, n)), [col]),
        ("reshape", lambda: reshape(a, (n, m)), [a]),
        ("transpose", lambda: transpose(a), [a]),
        ("matmul", lambda: matmul(a, w), [a, w]),
        ("softmax_rows", lambda: softmax_rows(a), [a]),
        ("take_rows", lambda: take_rows(tall, [2, 0, 2]), [tall]),
        ("fill_rows", lambda: fill_rows(tall, row, [1, 3]), [tall, row]),
        ("concat_rows", lambda: concat_rows([row, a]), [row, a]),
        ("row_norms", lambda: row_norms(a), [a]),
        ("normalize_rows", lambda: normalize_rows(a), [a]),
        ("layer_norm", lambda: layer_norm(a, gain, bias), [a, gain, bias]),
        (
            "attention",
            lambda: attention_forward(attn_x, attn),
            [attn_x, *attn.parameters().values()],
        ),
        (
            "mamba2_scan",
            lambda: mamba2_scan(scan_x, scan),
            [scan_x, *scan.parameters().values()],
        ),
    ]
    return cases


def _perturbed(model: Model, rng: np.random.Generator) -> Model:
    for param in model.parameters().values():
        param.data += rng.normal(0.0, PARAM_NOISE, size=param.shape)
    return model


def objective_case(
    seed: int, scope: str
) -> tuple[Callable[[], Tensor], Model, Model]:
    """Full distillation loss of a 2-block pair, K=2, half the patches masked"""
    rng = rng_for(seed, 3)
    teacher = _perturbed(Model.init(TEACHER_CONFIG, rng), rng).freeze()
    student = _perturbed(
        Model.init(STUDENT_CONFIG, rng, teacher_dim=TEACHER_CONFIG.embed_dim), rng
    )
    n = STUDENT_CONFIG.num_patches
    mask = MaskSpec.from_masked(rng.choice(n, size=n // 2, replace=False), n)
    image = rng.uniform(0.0, 1.0, size=(8, 8, 1))
    tokens = image_tokens(image, STUDENT_CONFIG.patch_size)
    stage_map = stage_partition(
        TEACHER_CONFIG.num_blocks, STUDENT_CONFIG.num_blocks, 2
    )
    cfg = DistillConfig(num_stages=2, mask_ratio=0.5, matching_scope=scope)

    def loss_fn() -> Tensor:
        return compute_losses(teacher, student, tokens, mask, stage_map, cfg).total

    return loss_fn, teacher, student


def random_shape(rng: np.random.Generator) -> tuple[int, int]:
    rows, cols = rng.integers(3, MAX_RANDOM_SIDE + 1, size=2)
    return int(rows), int(cols)


def check_primitives(
    rng: np.random.Generator,
    shape: tuple[int, int] = PRIMITIVE_SHAPE,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[GradCheck]:
    results = []
    for name, op, leaves in primitive_cases(rng, shape):
        error = check_gradients(_readout(op, rng), leaves, eps)
        results.append(GradCheck(name, error, tolerance))
    return results


def run_gradcheck(
    seed: int = 0,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    random_shapes: bool = False,
) -> list[GradCheck]:
    rng = rng_for(seed, 4)
    shape = random_shape(rng) if random_shapes else PRIMITIVE_SHAPE
    logger.debug(f"Primitive operands of shape {shape[0]}×{shape[1]}")
    results = check_primitives(rng, shape, eps, tolerance)
    for scope in OBJECTIVE_SCOPES:
        loss_fn, teacher, student = objective_case(seed, scope)
        error = check_gradients(loss_fn, list(student.parameters().values()), eps)
        results.append(GradCheck(f"objective[{scope}]", error, tolerance))
        leaked = [n for n, p in teacher.parameters().items() if p.grad is not None]
        if leaked:
            logger.error(f"Teacher parameters received gradients: {leaked}")
            results.append(GradCheck(f"teacher_frozen[{scope}]", np.inf, tolerance))
    for check in results:
        logger.debug(f"{check.name}: {check.error:.3e}")
    return results


@main.command("gradcheck")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option(
    "--eps",
    type=click.FloatRange(min=0.0, min_open=True),
    default=DEFAULT_EPS,
    show_default=True,
    help="Finite-difference step.",
)
@click.option(
    "--tolerance",
    type=click.FloatRange(min=0.0),
    default=DEFAULT_TOLERANCE,
    show_default=True,
    help="A check passes when its worst relative error is below this.",
)
@click.option(
    "--random-shapes",
    is_flag=True,
    help="Draw primitive operand shapes at random, up to "
    f"{MAX_RANDOM_SIDE}×{MAX_RANDOM_SIDE}.",
)
def gradcheck(seed: int, eps: float, tolerance: float, random_shapes: bool) -> None:
    """
    Check every primitive and the full objective against finite differences.

    Exits with 1 when any check fails.
    """
    results = run_gradcheck(seed, eps, tolerance, random_shapes)
    width = max(len(r.name) for r in results)
    click.echo(f"{'check':<{width}}  {'rel. error':>11}  status")
    for r in results:
        status = "ok" if r.passed else "FAIL"
        click.echo(f"{r.name:<{width}}  {r.error:>11.3e}  {status}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        sys.exit(EX_CHECK_FAILED)
    click.echo(f"All {len(results)} checks passed (tolerance {tolerance:g})")
    sys.exit(EX_OK)
