"""Activation matching and masked prediction objectives

Teacher features enter every loss detached; only the student side carries
gradients.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

from ..tensor import (
    ShapeError,
    Tensor,
    matmul,
    mean,
    mul,
    normalize_rows,
    row_norms,
    scale,
    smooth_l1,
    sub,
    sum,
    take_rows,
)
from .masking import MaskSpec

logger = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-12


class DegenerateFeatureError(ValueError):
    pass


class UndefinedLossError(ValueError):
    pass


@dataclass
class ActivationMap:
    """Pairwise cosines between selected tokens and their row-normalised form"""

    values: Tensor
    row_normalized: Tensor
    rows: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.rows)


def activation_map(features: Tensor, rows: Sequence[int]) -> ActivationMap:
    if not rows:
        raise ValueError("activation map needs at least one token")
    selected = take_rows(features, rows)
    norms = row_norms(selected)
    small = [rows[i] for i, n in enumerate(norms.data[:, 0]) if n <= DEGENERATE_NORM]
    if small:
        raise DegenerateFeatureError(
            f"token(s) {small} have feature norm <= {DEGENERATE_NORM}"
        )
    unit = normalize_rows(selected)
    values = matmul(unit, unit.T)
    return ActivationMap(values, normalize_rows(values), tuple(int(r) for r in rows))


def _check_pairs(teacher: Sequence[object], student: Sequence[object]) -> None:
    if len(teacher) != len(student) or not teacher:
        raise ShapeError(
            f"need the same non-zero number of teacher ({len(teacher)}) "
            f"and student ({len(student)}) stages"
        )


def activation_matching_loss(
    teacher_maps: Sequence[ActivationMap], student_maps: Sequence[ActivationMap]
) -> Tensor:
    """Mean over stages and rows of 1 - <row_tea, row_stu>"""
    _check_pairs(teacher_maps, student_maps)
    total: Tensor | None = None
    for k, (tea, stu) in enumerate(zip(teacher_maps, student_maps)):
        if tea.values.shape != stu.values.shape:
            raise ShapeError(
                f"stage {k}: teacher map {tea.values.shape} and "
                f"student map {stu.values.shape} differ"
            )
        inner = mul(tea.row_normalized.detach(), stu.row_normalized)
        term = scale(sum(inner), 1.0 / tea.size)
        total = term if total is None else total + term
    assert total is not None
    return sub(1.0, scale(total, 1.0 / len(teacher_maps)))


def class_token_loss(
    teacher_features: Sequence[Tensor],
    student_features: Sequence[Tensor],
    row: int = 0,
    projection: Tensor | None = None,
) -> Tensor:
    """Mean over stages of 1 - cos(teacher class token, student class token)

    With `projection` the student token is first mapped into the teacher's
    width, the same map masked prediction uses.
    """
    _check_pairs(teacher_features, student_features)
    total: Tensor | None = None
    for tea, stu in zip(teacher_features, student_features):
        t = normalize_rows(take_rows(tea.detach(), [row]))
        s = take_rows(stu, [row])
        if projection is not None:
            if s.shape[1] != projection.shape[0]:
                raise ShapeError(
                    f"cannot project class token {s.shape} with a "
                    f"{projection.shape} projection"
                )
            s = matmul(s, projection)
        s = normalize_rows(s)
        if t.shape != s.shape:
            raise ShapeError(f"class tokens {t.shape} and {s.shape} differ")
        term = sum(mul(t, s))
        total = term if total is None else total + term
    assert total is not None
    return sub(1.0, scale(total, 1.0 / len(teacher_features)))


def alignment_score(
    teacher_maps: Sequence[ActivationMap], student_maps: Sequence[ActivationMap]
) -> float:
    """Mean row cosine between teacher and student maps (1 - matching loss)"""
    return 1.0 - activation_matching_loss(teacher_maps, student_maps).item()


def masked_prediction_loss(
    y_tea: Tensor,
    y_stu_projected: Tensor,
    mask: MaskSpec,
    beta: float = 1.0,
    offset: int = 0,
) -> Tensor:
    """Smooth-ℓ1 over masked rows only, row means summed and divided by |masked|

    `offset` is the sequence row of patch 0 (1 with a class token).
    """
    if mask.is_empty:
        raise UndefinedLossError("masked prediction loss is undefined without masks")
    if y_tea.shape != y_stu_projected.shape:
        raise ShapeError(
            f"teacher output {y_tea.shape} and projected student output "
            f"{y_stu_projected.shape} differ"
        )
    rows = [offset + i for i in mask.masked]
    diff = take_rows(y_stu_projected, rows) - take_rows(y_tea.detach(), rows)
    per_row = mean(smooth_l1(diff, beta), axis=1)
    return scale(sum(per_row), 1.0 / len(rows))


def total_loss(l_act: Tensor | None, l_mask: Tensor | None, lam: float) -> Tensor:
    """L_act + lambda * L_mask; a disabled component is left out"""
    if l_act is None and l_mask is None:
        raise ValueError("at least one loss component is required")
    if l_mask is None:
        assert l_act is not None
        return l_act
    weighted = scale(l_mask, lam)
    return weighted if l_act is None else l_act + weighted
