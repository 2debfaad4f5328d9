import logging
from dataclasses import dataclass

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StageMap:
    """Blocks after which teacher and student features are compared"""

    num_stages: int
    teacher_taps: tuple[int, ...]
    student_taps: tuple[int, ...]

    def __post_init__(self) -> None:
        for name, taps in (
            ("teacher", self.teacher_taps),
            ("student", self.student_taps),
        ):
            if len(taps) != self.num_stages:
                raise ValueError(
                    f"{name} has {len(taps)} taps for {self.num_stages} stages"
                )
            if any(b <= a for a, b in zip(taps, taps[1:])):
                raise ValueError(f"{name} taps {taps} are not strictly increasing")


def _taps(num_blocks: int, num_stages: int) -> tuple[int, ...]:
    return tuple(-(-k * num_blocks // num_stages) for k in range(1, num_stages + 1))


def stage_partition(
    teacher_blocks: int, student_blocks: int, num_stages: int
) -> StageMap:
    """Tap k (1-based) sits after block ceil(k * blocks / K) of each model"""
    limit = min(teacher_blocks, student_blocks)
    if not 1 <= num_stages <= limit:
        raise ValueError(
            f"stage count K={num_stages} must be within 1..{limit} for "
            f"{teacher_blocks} teacher and {student_blocks} student blocks"
        )
    stage_map = StageMap(
        num_stages,
        _taps(teacher_blocks, num_stages),
        _taps(student_blocks, num_stages),
    )
    logger.debug(
        f"Stage taps: teacher {stage_map.teacher_taps}, "
        f"student {stage_map.student_taps}"
    )
    return stage_map
