import math

import numpy as np
import pytest

from linear_distill.distill.optim import (
    AdamW,
    WarmupCosine,
    grad_norm,
    skips_weight_decay,
)
from linear_distill.tensor import Tensor


def test_schedule_shape() -> None:
    schedule = WarmupCosine(peak=1.0, floor=0.1, warmup_steps=4, total_steps=14)
    assert schedule(0) == pytest.approx(0.25)
    assert schedule(3) == pytest.approx(1.0)
    assert schedule(4) == pytest.approx(1.0)
    assert schedule(9) == pytest.approx(0.55)
    assert schedule(14) == pytest.approx(0.1)
    assert schedule(100) == pytest.approx(0.1)
    values = [schedule(s) for s in range(4, 15)]
    assert values == sorted(values, reverse=True)


def test_zero_peak_stays_zero() -> None:
    schedule = WarmupCosine(peak=0.0, floor=1e-5, warmup_steps=2, total_steps=10)
    assert all(schedule(s) == 0.0 for s in range(12))


@pytest.mark.parametrize(
    "name,skips",
    [
        ("blocks.0.mlp.w1", False),
        ("blocks.0.mlp.b1", True),
        ("blocks.3.norm1.gain", True),
        ("blocks.3.norm1.bias", True),
        ("blocks.1.mixer.alpha", True),
        ("blocks.1.mixer.w_delta", False),
        ("patch_embed.b", True),
        ("cls_token", True),
        ("mask_token", True),
        ("pos_embed", True),
        ("projection", False),
    ],
)
def test_weight_decay_exclusions(name: str, skips: bool) -> None:
    assert skips_weight_decay(name) is skips


def _quadratic(start: float) -> tuple[Tensor, AdamW]:
    param = Tensor(np.array([[start]]), requires_grad=True)
    schedule = WarmupCosine(peak=0.1, floor=0.1, warmup_steps=0, total_steps=100)
    return param, AdamW({"w": param}, schedule, weight_decay=0.0)


def test_first_step_moves_by_lr() -> None:
    param, optimizer = _quadratic(3.0)
    param.grad = np.array([[6.0]])
    lr = optimizer.step()
    assert lr == pytest.approx(0.1)
    assert param.data[0, 0] == pytest.approx(2.9, abs=1e-6)


def test_minimises_quadratic() -> None:
    param, optimizer = _quadratic(3.0)
    for _ in range(300):
        optimizer.zero_grad()
        param.grad = 2.0 * param.data
        optimizer.step()
    assert abs(param.data[0, 0]) < 0.1


def test_decay_only_hits_decayed_names() -> None:
    weight = Tensor(np.ones((1, 1)), requires_grad=True)
    bias = Tensor(np.ones((1, 1)), requires_grad=True)
    schedule = WarmupCosine(peak=0.1, floor=0.1, warmup_steps=0, total_steps=10)
    optimizer = AdamW({"mlp.w1": weight, "mlp.b1": bias}, schedule, weight_decay=0.5)
    weight.grad = np.zeros((1, 1))
    bias.grad = np.zeros((1, 1))
    optimizer.step()
    assert weight.data[0, 0] == pytest.approx(0.95)
    assert bias.data[0, 0] == 1.0


def test_params_without_grad_are_left_alone() -> None:
    param, optimizer = _quadratic(3.0)
    optimizer.step()
    assert param.data[0, 0] == 3.0
    assert optimizer.step_count == 1


def test_grad_norm() -> None:
    a = Tensor(np.zeros((1, 2)), requires_grad=True)
    b = Tensor(np.zeros((1, 1)), requires_grad=True)
    c = Tensor(np.zeros((1, 1)), requires_grad=True)
    a.grad = np.array([[3.0, 0.0]])
    b.grad = np.array([[4.0]])
    assert grad_norm({"a": a, "b": b, "c": c}) == pytest.approx(5.0)
    assert math.isclose(grad_norm({}), 0.0)
