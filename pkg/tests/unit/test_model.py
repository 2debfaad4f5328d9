from dataclasses import replace

import numpy as np
import pytest

from linear_distill.data.synthetic import SyntheticShapes
from linear_distill.distill.masking import MaskSpec
from linear_distill.distill.probe import stage_maps
from linear_distill.mixers import MixerKind
from linear_distill.model import (
    MODEL_PRESETS,
    Model,
    ModelConfig,
    block_forward,
    image_tokens,
    patch_rows,
    patchify,
    project_to_teacher,
    standardize,
)
from linear_distill.tensor import ShapeError, Tensor

from .conftest import TINY_STUDENT, TINY_TEACHER


def _tokens(config: ModelConfig, rng: np.random.Generator) -> Tensor:
    image = rng.uniform(size=(config.image_size, config.image_size, config.channels))
    return patchify(image, config.patch_size)


def test_patchify_is_row_major() -> None:
    image = np.arange(16.0).reshape(4, 4)
    tokens = patchify(image, 2).data
    assert tokens.shape == (4, 4)
    assert tokens[0].tolist() == [0.0, 1.0, 4.0, 5.0]
    assert tokens[1].tolist() == [2.0, 3.0, 6.0, 7.0]
    assert tokens[2].tolist() == [8.0, 9.0, 12.0, 13.0]


def test_patchify_keeps_channels_innermost() -> None:
    image = np.zeros((2, 2, 3))
    image[0, 1] = [1.0, 2.0, 3.0]
    assert patchify(image, 2).data[0].tolist()[3:6] == [1.0, 2.0, 3.0]


def test_patchify_rejects_indivisible_image() -> None:
    with pytest.raises(ShapeError):
        patchify(np.zeros((5, 4, 1)), 2)


def test_patchify_reassembles_to_image(rng: np.random.Generator) -> None:
    image = rng.uniform(size=(8, 8, 3))
    tokens = patchify(image, 4).data
    assert tokens.shape == (4, 48)
    grid = tokens.reshape(2, 2, 4, 4, 3).transpose(0, 2, 1, 3, 4)
    assert np.array_equal(grid.reshape(8, 8, 3), image)


def test_constant_image_gives_identical_patches() -> None:
    tokens = patchify(np.full((4, 4, 2), 0.3), 2).data
    assert all(np.array_equal(row, tokens[0]) for row in tokens)


def test_standardize_per_channel(rng: np.random.Generator) -> None:
    image = rng.uniform(size=(8, 8, 3)) * [1.0, 0.1, 5.0] + [0.0, 0.5, -2.0]
    out = standardize(image)
    np.testing.assert_allclose(out.mean(axis=(0, 1)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.std(axis=(0, 1)), 1.0, atol=1e-12)
    flat = standardize(np.full((4, 4), 0.7))
    assert flat.shape == (4, 4, 1)
    assert np.all(flat == 0.0)
    with pytest.raises(ShapeError):
        standardize(np.zeros(4))


def test_image_tokens_standardize_before_patchify(rng: np.random.Generator) -> None:
    image = rng.uniform(size=(4, 4, 1))
    expected = patchify(standardize(image), 2).data
    assert np.array_equal(image_tokens(image, 2).data, expected)


def test_fresh_model_maps_are_not_saturated(
    tiny_student: Model, tiny_source: SyntheticShapes
) -> None:
    image = tiny_source.probe_batch(1)[0].image
    (amap,) = stage_maps(tiny_student, image_tokens(image, 2), [1])
    off_diagonal = amap.values.data[~np.eye(16, dtype=bool)]
    assert off_diagonal.min() < 0.5


def test_preset_geometry() -> None:
    base = MODEL_PRESETS["teacher-base"]
    assert base.num_patches == 196
    assert base.seq_len == 197
    assert base.patch_dim == 16 * 16 * 3
    assert MODEL_PRESETS["student-large"].grid_size == 16
    assert MODEL_PRESETS["student-small"].embed_dim == 512


def test_config_validation() -> None:
    with pytest.raises(ValueError):
        replace(TINY_TEACHER, image_size=9)
    with pytest.raises(ValueError):
        replace(TINY_TEACHER, num_heads=2)
    with pytest.raises(ValueError):
        ModelConfig.preset("no-such-model")
    assert ModelConfig.from_dict(TINY_STUDENT.to_dict()) == TINY_STUDENT


def test_forward_matches_block_stepping(
    tiny_student: Model, rng: np.random.Generator
) -> None:
    tokens = _tokens(TINY_STUDENT, rng)
    final, stages = tiny_student.forward(tokens, taps=[1, 2])
    x = tiny_student.embed(tokens)
    for block, tapped in zip(tiny_student.blocks, stages):
        x = block_forward(x, block)
        assert np.array_equal(x.data, tapped.data)
    assert np.array_equal(x.data, final.data)


def test_zero_blocks_returns_embedding(rng: np.random.Generator) -> None:
    model = Model.init(replace(TINY_TEACHER, num_blocks=0), rng)
    tokens = _tokens(TINY_TEACHER, rng)
    final, stages = model.forward(tokens)
    assert stages == []
    assert np.array_equal(final.data, model.embed(tokens).data)


def test_taps_out_of_range(tiny_teacher: Model, rng: np.random.Generator) -> None:
    with pytest.raises(ValueError):
        tiny_teacher.forward(_tokens(TINY_TEACHER, rng), taps=[5])


def test_empty_mask_is_bit_identical(
    tiny_student: Model, rng: np.random.Generator
) -> None:
    tokens = _tokens(TINY_STUDENT, rng)
    plain, _ = tiny_student.forward(tokens)
    masked, _ = tiny_student.forward(tokens, mask=MaskSpec.empty(16))
    assert np.array_equal(plain.data, masked.data)


def test_mask_token_replaces_masked_patches(
    tiny_student: Model, rng: np.random.Generator
) -> None:
    tokens = _tokens(TINY_STUDENT, rng)
    mask = MaskSpec.from_masked([3, 7], 16)
    x = tiny_student.embed(tokens, mask).data
    assert tiny_student.extras is not None
    expected = tiny_student.extras.mask_token.data[0] + tiny_student.pos_embed.data
    for patch in (3, 7):
        np.testing.assert_array_equal(x[patch + 1], expected[patch + 1])


def test_scan_student_rows_before_first_mask_are_unchanged(
    tiny_student: Model, rng: np.random.Generator
) -> None:
    tokens = _tokens(TINY_STUDENT, rng)
    plain, _ = tiny_student.forward(tokens)
    masked, _ = tiny_student.forward(tokens, mask=MaskSpec.from_masked([5, 9], 16))
    # class token plus patches 0..4
    assert np.array_equal(plain.data[:6], masked.data[:6])
    assert not np.array_equal(plain.data[6:], masked.data[6:])


def test_teacher_cannot_apply_mask(
    tiny_teacher: Model, rng: np.random.Generator
) -> None:
    with pytest.raises(ValueError):
        tiny_teacher.embed(_tokens(TINY_TEACHER, rng), MaskSpec.from_masked([0], 16))
    with pytest.raises(ValueError, match=r"no \[mask\] token"):
        tiny_teacher.forward(_tokens(TINY_TEACHER, rng), mask=MaskSpec.empty(16))


def test_masked_patch_content_does_not_reach_student(
    tiny_student: Model, rng: np.random.Generator
) -> None:
    tokens = _tokens(TINY_STUDENT, rng)
    mask = MaskSpec.from_masked([0, 6, 7, 15], 16)
    altered = tokens.data.copy()
    altered[list(mask.masked)] = rng.normal(size=(4, tokens.shape[1])) * 10.0
    final, stages = tiny_student.forward(tokens, mask=mask, taps=[1, 2])
    final_alt, stages_alt = tiny_student.forward(
        Tensor(altered), mask=mask, taps=[1, 2]
    )
    np.testing.assert_allclose(final_alt.data, final.data, rtol=0, atol=1e-13)
    for a, b in zip(stages_alt, stages):
        np.testing.assert_allclose(a.data, b.data, rtol=0, atol=1e-13)


def test_embed_checks_token_shape(tiny_teacher: Model) -> None:
    with pytest.raises(ShapeError):
        tiny_teacher.embed(Tensor(np.zeros((15, 4))))


def test_project_to_teacher(tiny_student: Model, rng: np.random.Generator) -> None:
    extras = tiny_student.extras
    assert extras is not None
    assert extras.projection.shape == (6, 8)
    y = Tensor(rng.normal(size=(17, 6)))
    assert project_to_teacher(y, extras).shape == (17, 8)
    extras.projection.data[...] = 0.0
    assert np.all(project_to_teacher(y, extras).data == 0.0)
    with pytest.raises(ShapeError):
        project_to_teacher(Tensor(np.zeros((17, 8))), extras)


def test_identity_projection_is_a_no_op(rng: np.random.Generator) -> None:
    config = replace(TINY_STUDENT, embed_dim=8)
    model = Model.init(config, rng, teacher_dim=8)
    assert model.extras is not None
    model.extras.projection.data[...] = np.eye(8)
    y = Tensor(rng.normal(size=(17, 8)))
    assert np.array_equal(project_to_teacher(y, model.extras).data, y.data)


def test_patch_rows_respect_class_token() -> None:
    assert patch_rows(TINY_STUDENT, [0, 3]) == [1, 4]
    no_cls = replace(TINY_STUDENT, use_class_token=False)
    assert patch_rows(no_cls, [0, 3]) == [0, 3]
    assert patch_rows(no_cls) == list(range(16))


def test_parameters_and_freeze(rng: np.random.Generator) -> None:
    model = Model.init(TINY_STUDENT, rng, teacher_dim=8)
    names = set(model.parameters())
    assert {"cls_token", "pos_embed", "mask_token", "projection"} <= names
    assert "blocks.1.mixer.alpha" in names
    model.freeze()
    assert not any(p.requires_grad for p in model.parameters().values())


def test_load_state_dict_checks_keys_and_shapes(rng: np.random.Generator) -> None:
    model = Model.init(TINY_TEACHER, rng)
    state = model.state_dict()
    other = Model.init(TINY_TEACHER, np.random.default_rng(99))
    other.load_state_dict(state)
    for name, value in other.state_dict().items():
        assert np.array_equal(value, state[name])
    with pytest.raises(KeyError):
        other.load_state_dict({k: v for k, v in state.items() if k != "pos_embed"})
    state["pos_embed"] = np.zeros((3, 3))
    with pytest.raises(ShapeError):
        other.load_state_dict(state)


def test_attention_teacher_mixer_kind(tiny_teacher: Model) -> None:
    assert tiny_teacher.config.mixer_kind is MixerKind.ATTENTION
    assert len(tiny_teacher.blocks) == 4
