"""Teacher/student activation-map alignment on a fixed batch"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..model import Model, image_tokens, patch_rows
from ..tensor import Array, Tensor, no_grad
from .losses import ActivationMap, activation_map, alignment_score
from .stages import StageMap

logger = logging.getLogger(__name__)


@dataclass
class ProbeResult:
    """Per-stage alignment averaged over the probe images"""

    per_stage: list[float]
    maps: list[tuple[Array, Array]] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_stage)) if self.per_stage else 0.0


def stage_maps(
    model: Model, tokens: Tensor, taps: Sequence[int]
) -> list[ActivationMap]:
    """Activation maps over all patch rows of an unmasked forward"""
    with no_grad():
        _, stages = model.forward(tokens, taps=taps)
    rows = patch_rows(model.config)
    return [activation_map(f, rows) for f in stages]


class AlignmentProbe:
    """Caches teacher maps for a fixed image batch and scores students on it"""

    def __init__(
        self,
        teacher: Model,
        images: Sequence[Array],
        stage_map: StageMap,
        keep_maps: bool = False,
    ) -> None:
        self.stage_map = stage_map
        self.keep_maps = keep_maps
        patch_size = teacher.config.patch_size
        self.tokens = [image_tokens(image, patch_size) for image in images]
        self.teacher_maps = [
            stage_maps(teacher, t, stage_map.teacher_taps) for t in self.tokens
        ]

    def measure(self, student: Model) -> ProbeResult:
        if not self.tokens:
            return ProbeResult([])
        scores = np.zeros((len(self.tokens), self.stage_map.num_stages))
        result = ProbeResult([])
        for i, (tokens, tea_maps) in enumerate(zip(self.tokens, self.teacher_maps)):
            stu_maps = stage_maps(student, tokens, self.stage_map.student_taps)
            with no_grad():
                for k, (tea, stu) in enumerate(zip(tea_maps, stu_maps)):
                    scores[i, k] = alignment_score([tea], [stu])
            if self.keep_maps and i == 0:
                result.maps = [
                    (tea.values.numpy(), stu.values.numpy())
                    for tea, stu in zip(tea_maps, stu_maps)
                ]
        result.per_stage = [float(s) for s in scores.mean(axis=0)]
        return result


def probe_alignment(
    teacher: Model,
    student: Model,
    images: Sequence[Array],
    stage_map: StageMap,
) -> ProbeResult:
    return AlignmentProbe(teacher, images, stage_map, keep_maps=True).measure(student)
