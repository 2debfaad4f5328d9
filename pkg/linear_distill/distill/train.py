"""Training loop distilling a frozen attention teacher into a scan student"""

import csv
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..checkpoint import save_checkpoint
from ..data.common import DataSource, Sample
from ..model import Model, image_tokens, patch_rows, project_to_teacher
from ..tensor import NonFiniteError, Tensor, backward, no_grad, scale
from .config import DistillConfig
from .losses import (
    activation_map,
    activation_matching_loss,
    class_token_loss,
    masked_prediction_loss,
    total_loss,
)
from .masking import MaskSpec, sample_mask
from .optim import AdamW, WarmupCosine, grad_norm
from .probe import AlignmentProbe
from .stages import StageMap, stage_partition
from .teacher import pretrain_teacher

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
STUDENT_FILE = "student.json"
TEACHER_FILE = "teacher.json"
METRICS_HEADER = ("step", "loss", "l_act", "l_mask", "lr", "alignment")


@dataclass
class LossTerms:
    total: Tensor
    l_act: Tensor | None
    l_mask: Tensor | None


@dataclass
class StepMetrics:
    step: int
    loss: float
    l_act: float
    l_mask: float
    grad_norm: float
    lr: float

    def as_dict(self) -> dict[str, float]:
        return {
            "loss": self.loss,
            "l_act": self.l_act,
            "l_mask": self.l_mask,
            "grad_norm": self.grad_norm,
            "lr": self.lr,
        }


@dataclass
class RunResult:
    rows: list[dict[str, float]] = field(default_factory=list)
    student: Model | None = None
    teacher: Model | None = None
    metrics_path: Path | None = None
    student_path: Path | None = None
    teacher_path: Path | None = None


def check_compatible(teacher: Model, student: Model) -> None:
    t, s = teacher.config, student.config
    mismatched = [
        key
        for key in ("image_size", "patch_size", "channels", "use_class_token")
        if getattr(t, key) != getattr(s, key)
    ]
    if mismatched:
        raise ValueError(
            f"teacher {t.name} and student {s.name} differ in {mismatched}"
        )
    if student.extras is None:
        raise ValueError(f"student {s.name} has no [mask] token / projection")
    if student.extras.projection.shape != (s.embed_dim, t.embed_dim):
        raise ValueError(
            f"student projection {student.extras.projection.shape} does not map "
            f"{s.embed_dim} -> {t.embed_dim}"
        )


def compute_losses(
    teacher: Model,
    student: Model,
    tokens: Tensor,
    mask: MaskSpec | None,
    stage_map: StageMap,
    cfg: DistillConfig,
) -> LossTerms:
    """One teacher (unmasked, no grad) and one student forward, both losses"""
    with no_grad():
        y_tea, f_tea = teacher.forward(tokens, taps=stage_map.teacher_taps)
    y_stu, f_stu = student.forward(tokens, mask=mask, taps=stage_map.student_taps)

    l_act = None
    if cfg.use_activation_matching:
        if cfg.matching_scope == "class_only":
            if teacher.cls_token is None or student.cls_token is None:
                raise ValueError("class_only matching needs class tokens")
            projection = None
            if student.extras is not None:
                projection = student.extras.projection
            l_act = class_token_loss(f_tea, f_stu, row=0, projection=projection)
        else:
            visible = None
            if cfg.matching_scope == "visible_only" and mask is not None:
                visible = mask.visible
            tea_rows = patch_rows(teacher.config, visible)
            stu_rows = patch_rows(student.config, visible)
            l_act = activation_matching_loss(
                [activation_map(f, tea_rows) for f in f_tea],
                [activation_map(f, stu_rows) for f in f_stu],
            )

    l_mask = None
    if cfg.use_masked_prediction:
        if mask is None:
            raise ValueError("masked prediction needs a mask")
        assert student.extras is not None
        l_mask = masked_prediction_loss(
            y_tea,
            project_to_teacher(y_stu, student.extras),
            mask,
            beta=cfg.smooth_l1_beta,
            offset=student.config.patch_offset,
        )
    return LossTerms(total_loss(l_act, l_mask, cfg.loss_lambda), l_act, l_mask)


def _item(value: Tensor | None) -> float:
    return value.item() if value is not None else 0.0


def train_step(
    teacher: Model,
    student: Model,
    optimizer: AdamW,
    batch: Sequence[Sample],
    cfg: DistillConfig,
    stage_map: StageMap,
    rng: np.random.Generator,
    step: int = 0,
) -> StepMetrics:
    """Average the objective over `batch`, back-propagate and update the student

    Images are processed one at a time; each image's loss is scaled by 1/B
    before `backward`, so the accumulated gradient is the batch mean.
    """
    optimizer.zero_grad()
    sums = np.zeros(3)
    num_patches = student.config.num_patches
    for sample in batch:
        tokens = image_tokens(sample.image, student.config.patch_size)
        mask = None
        if cfg.use_masked_prediction:
            mask = sample_mask(num_patches, cfg.mask_ratio, cfg.mask_strategy, rng)
        terms = compute_losses(teacher, student, tokens, mask, stage_map, cfg)
        values = (terms.total.item(), _item(terms.l_act), _item(terms.l_mask))
        if not all(math.isfinite(v) for v in values):
            raise NonFiniteError(
                f"non-finite loss at step {step}: total={values[0]}, "
                f"l_act={values[1]}, l_mask={values[2]}, "
                f"masked={len(mask.masked) if mask else 0}"
            )
        sums += values
        backward(scale(terms.total, 1.0 / len(batch)))
    norm = grad_norm(optimizer.params)
    lr = optimizer.step()
    loss, l_act, l_mask = (float(v) for v in sums / len(batch))
    return StepMetrics(step, loss, l_act, l_mask, norm, lr)


def build_optimizer(student: Model, cfg: DistillConfig) -> AdamW:
    schedule = WarmupCosine(
        peak=cfg.lr,
        floor=cfg.min_lr,
        warmup_steps=cfg.warmup_steps,
        total_steps=cfg.steps,
    )
    return AdamW(
        student.parameters(),
        schedule,
        weight_decay=cfg.weight_decay,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.adam_eps,
    )


def prepare_teacher(
    cfg: DistillConfig, source: DataSource, teacher: Model | None = None
) -> Model:
    if teacher is None and cfg.teacher_steps > 0:
        teacher, _ = pretrain_teacher(
            cfg.teacher_config(),
            source,
            steps=cfg.teacher_steps,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
            lr=cfg.teacher_lr,
            weight_decay=cfg.weight_decay,
        )
    elif teacher is None:
        logger.info("Using a randomly initialised teacher")
        teacher = Model.init(
            cfg.teacher_config(), np.random.default_rng([cfg.seed, 0])
        )
    return teacher.freeze()


def _should_log(step: int, steps: int, every: int) -> bool:
    return step == 1 or step % every == 0 or step == steps


def distill_run(
    cfg: DistillConfig,
    source: DataSource,
    out_dir: Path,
    teacher: Model | None = None,
    on_row: Callable[[dict[str, float]], None] | None = None,
) -> RunResult:
    """Distil for `cfg.steps` steps, writing the metrics CSV and checkpoints"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = RunResult()

    pretrain_inline = teacher is None and cfg.teacher_steps > 0
    teacher = prepare_teacher(cfg, source, teacher)
    student = Model.init(
        cfg.student_config(),
        np.random.default_rng([cfg.seed, 1]),
        teacher_dim=teacher.config.embed_dim,
    )
    check_compatible(teacher, student)
    stage_map = stage_partition(
        teacher.config.num_blocks, student.config.num_blocks, cfg.num_stages
    )
    optimizer = build_optimizer(student, cfg)
    mask_rng = np.random.default_rng([cfg.seed, 2])
    probe = AlignmentProbe(
        teacher, [s.image for s in source.probe_batch(cfg.probe_size)], stage_map
    )
    if pretrain_inline:
        result.teacher_path = save_checkpoint(teacher, out_dir / TEACHER_FILE)

    start = probe.measure(student).mean
    logger.info(
        f"Distilling {teacher.config.name} -> {student.config.name} for "
        f"{cfg.steps} steps, initial alignment {start:.4f}"
    )
    result.metrics_path = out_dir / METRICS_FILE
    with result.metrics_path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        for step in range(1, cfg.steps + 1):
            batch = source.batch(step - 1, cfg.batch_size)
            metrics = train_step(
                teacher, student, optimizer, batch, cfg, stage_map, mask_rng, step
            )
            if not _should_log(step, cfg.steps, cfg.log_every):
                continue
            row = {"step": float(step), **metrics.as_dict()}
            row["alignment"] = probe.measure(student).mean
            writer.writerow([step] + [repr(row[k]) for k in METRICS_HEADER[1:]])
            f.flush()
            result.rows.append(row)
            logger.info(
                f"step {step}/{cfg.steps}: loss {metrics.loss:.5f} "
                f"(act {metrics.l_act:.5f}, mask {metrics.l_mask:.5f}), "
                f"lr {metrics.lr:.2e}, alignment {row['alignment']:.4f}"
            )
            if on_row is not None:
                on_row(row)

    result.student_path = save_checkpoint(student, out_dir / STUDENT_FILE)
    result.student = student
    result.teacher = teacher
    return result
