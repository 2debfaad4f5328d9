import math

import numpy as np
import pytest

from linear_distill.data.common import Sample
from linear_distill.data.synthetic import SyntheticShapes
from linear_distill.distill.teacher import (
    ClassifierHead,
    PretrainMetrics,
    classification_loss,
    pretrain_teacher,
)
from linear_distill.model import Model

from ..conftest import TINY_TEACHER


def test_zero_head_gives_uniform_prediction(
    tiny_teacher: Model, tiny_source: SyntheticShapes
) -> None:
    head = ClassifierHead.init(8, 4, np.random.default_rng(0))
    head.w.data[...] = 0.0
    sample = tiny_source.batch(0, 1)[0]
    loss, predicted = classification_loss(tiny_teacher, head, sample)
    assert loss.item() == pytest.approx(math.log(4))
    assert predicted == 0


def test_confident_head_has_small_loss(tiny_teacher: Model) -> None:
    head = ClassifierHead.init(8, 4, np.random.default_rng(0))
    head.w.data[...] = 0.0
    head.b.data[...] = [[0.0, 0.0, 30.0, 0.0]]
    sample = Sample(np.zeros((8, 8, 1)), label=2)
    loss, predicted = classification_loss(tiny_teacher, head, sample)
    assert predicted == 2
    assert loss.item() < 1e-9


def test_pretrain_reports_every_step(tiny_source: SyntheticShapes) -> None:
    seen: list[PretrainMetrics] = []
    model, history = pretrain_teacher(
        TINY_TEACHER, tiny_source, steps=6, batch_size=4, seed=0, on_step=seen.append
    )
    assert [m.step for m in history] == [1, 2, 3, 4, 5, 6]
    assert seen == history
    assert all(math.isfinite(m.loss) and 0.0 <= m.accuracy <= 1.0 for m in history)
    assert not any(p.requires_grad for p in model.parameters().values())


def test_pretrain_is_deterministic(tiny_source: SyntheticShapes) -> None:
    a, _ = pretrain_teacher(TINY_TEACHER, tiny_source, steps=3, batch_size=2, seed=1)
    b, _ = pretrain_teacher(TINY_TEACHER, tiny_source, steps=3, batch_size=2, seed=1)
    for name, value in a.state_dict().items():
        assert np.array_equal(value, b.state_dict()[name])


def test_pretrain_changes_the_backbone(tiny_source: SyntheticShapes) -> None:
    trained, _ = pretrain_teacher(
        TINY_TEACHER, tiny_source, steps=3, batch_size=2, seed=1, lr=1e-2
    )
    fresh = Model.init(TINY_TEACHER, np.random.default_rng([1, 0]))
    assert not np.array_equal(trained.patch_w.data, fresh.patch_w.data)


def test_zero_steps_returns_initialisation(tiny_source: SyntheticShapes) -> None:
    model, history = pretrain_teacher(
        TINY_TEACHER, tiny_source, steps=0, batch_size=2, seed=1
    )
    fresh = Model.init(TINY_TEACHER, np.random.default_rng([1, 0]))
    assert history == []
    for name, value in model.state_dict().items():
        assert np.array_equal(value, fresh.state_dict()[name])
