import numpy as np
import pytest

from linear_distill.data.synthetic import SyntheticShapes
from linear_distill.distill.config import DistillConfig
from linear_distill.mixers import MixerKind
from linear_distill.model import Model, ModelConfig

TINY_TEACHER = ModelConfig(
    "tiny-teacher", 8, 16, 4, 2, 8, MixerKind.ATTENTION, channels=1
)
TINY_STUDENT = ModelConfig(
    "tiny-student", 6, 12, 2, 2, 8, MixerKind.MAMBA2, channels=1, use_mask_token=True
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_teacher(rng: np.random.Generator) -> Model:
    return Model.init(TINY_TEACHER, rng).freeze()


@pytest.fixture
def tiny_student(rng: np.random.Generator) -> Model:
    return Model.init(TINY_STUDENT, rng, teacher_dim=TINY_TEACHER.embed_dim)


@pytest.fixture
def tiny_source() -> SyntheticShapes:
    return SyntheticShapes(image_size=8, channels=1, seed=0)


@pytest.fixture
def smoke_config() -> DistillConfig:
    return DistillConfig(
        teacher_model="teacher-toy",
        student_model="student-toy",
        num_stages=2,
        warmup_steps=1,
        steps=3,
        batch_size=2,
        log_every=1,
        probe_size=2,
    )

