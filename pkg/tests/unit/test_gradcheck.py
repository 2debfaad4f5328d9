import pytest

from linear_distill.gradcheck import (
    DEFAULT_TOLERANCE,
    MAX_RANDOM_SIDE,
    OBJECTIVE_SCOPES,
    GradCheck,
    check_primitives,
    primitive_cases,
    random_shape,
    run_gradcheck,
)
from linear_distill.utils import rng_for


@pytest.mark.parametrize("seed", range(10))
def test_all_checks_pass(seed: int) -> None:
    results = run_gradcheck(seed)
    failed = [(r.name, r.error) for r in results if not r.passed]
    assert failed == []
    assert all(r.error < DEFAULT_TOLERANCE for r in results)


def test_every_primitive_and_scope_is_checked() -> None:
    names = [r.name for r in run_gradcheck(0)]
    primitives = [name for name, _, _ in primitive_cases(rng_for(0, 4))]
    assert names == primitives + [f"objective[{s}]" for s in OBJECTIVE_SCOPES]
    assert {"attention", "mamba2_scan", "smooth_l1", "layer_norm"} <= set(names)


def test_zero_tolerance_fails() -> None:
    assert not any(r.passed for r in run_gradcheck(0, tolerance=0.0))


def test_gradcheck_result() -> None:
    assert GradCheck("x", 1e-7, 1e-6).passed
    assert not GradCheck("x", 1e-6, 1e-6).passed


def test_primitives_pass_on_random_shapes() -> None:
    shapes: set[tuple[int, int]] = set()
    for seed in range(100):
        rng = rng_for(seed, 5)
        shape = random_shape(rng)
        shapes.add(shape)
        results = check_primitives(rng, shape)
        failed = [(r.name, r.error) for r in results if not r.passed]
        assert failed == [], (seed, shape)
    assert max(max(s) for s in shapes) <= MAX_RANDOM_SIDE
    assert len(shapes) > 1


def test_random_shapes_keep_check_names() -> None:
    names = [r.name for r in run_gradcheck(3, random_shapes=True)]
    assert names == [r.name for r in run_gradcheck(3)]
    with pytest.raises(ValueError):
        primitive_cases(rng_for(0, 4), (1, 4))
