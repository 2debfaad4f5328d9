import math

import numpy as np
import pytest

from linear_distill.mixers import (
    AttentionParams,
    Mamba2Params,
    attention_forward,
    attention_weights,
    decay_factors,
    mamba2_scan,
    mamba2_unrolled_oracle,
    mixer_forward,
)
from linear_distill.tensor import ShapeError, Tensor, measure_allocations, no_grad


def _attention(
    dim: int, rng: np.random.Generator, std: float = 0.5
) -> AttentionParams:
    weights = (Tensor(std * rng.normal(size=(dim, dim))) for _ in range(3))
    return AttentionParams(*weights)


def _scan(
    dim: int, rng: np.random.Generator, alpha: float = 0.7, std: float = 0.5
) -> Mamba2Params:
    return Mamba2Params(
        *(Tensor(std * rng.normal(size=(dim, dim))) for _ in range(3)),
        Tensor(std * rng.normal(size=(dim, 1))),
        Tensor(alpha),
    )


def _attention_oracle(x: np.ndarray, p: AttentionParams) -> np.ndarray:
    """Pairwise scores and weighted sums, one query at a time"""
    length, dim = x.shape
    q = x @ p.w_q.data
    k = x @ p.w_k.data
    v = x @ p.w_v.data
    out = np.zeros((length, dim))
    for i in range(length):
        scores = [float(q[i] @ k[j]) / math.sqrt(dim) for j in range(length)]
        top = max(scores)
        weights = [math.exp(s - top) for s in scores]
        total = math.fsum(weights)
        for j in range(length):
            out[i] += weights[j] / total * v[j]
    return out


def test_attention_matches_pairwise_oracle() -> None:
    for seed in range(50):
        rng = np.random.default_rng(seed)
        length, dim = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        x = rng.normal(size=(length, dim))
        p = _attention(dim, rng)
        got = attention_forward(Tensor(x), p).data
        np.testing.assert_allclose(got, _attention_oracle(x, p), atol=1e-10, rtol=0)


def test_attention_rows_sum_to_one(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(7, 4)))
    weights = attention_weights(x, _attention(4, rng, std=3.0)).data
    np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12, rtol=0)


def test_attention_single_token_is_value_projection(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(1, 3)))
    p = _attention(3, rng)
    np.testing.assert_allclose(
        attention_forward(x, p).data, x.data @ p.w_v.data, atol=1e-14
    )


def test_attention_identical_tokens_give_uniform_weights(
    rng: np.random.Generator,
) -> None:
    x = Tensor(np.tile(rng.normal(size=(1, 4)), (5, 1)))
    weights = attention_weights(x, _attention(4, rng)).data
    np.testing.assert_allclose(weights, 0.2, atol=1e-12)


def test_scan_matches_unrolled_oracle() -> None:
    for seed in range(50):
        rng = np.random.default_rng(seed)
        length, dim = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        x = Tensor(rng.normal(size=(length, dim)))
        p = _scan(dim, rng, alpha=float(rng.uniform(0.0, 2.0)))
        np.testing.assert_allclose(
            mamba2_scan(x, p).data,
            mamba2_unrolled_oracle(x, p).data,
            atol=1e-9,
            rtol=0,
        )


def test_scan_single_token(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(1, 3)))
    p = _scan(3, rng)
    q, k, v = (x.data[0] @ w.data for w in (p.w_q, p.w_k, p.w_v))
    np.testing.assert_allclose(mamba2_scan(x, p).data[0], float(k @ q) * v, atol=1e-14)


def test_scan_zero_alpha_is_unnormalised_causal_attention(
    rng: np.random.Generator,
) -> None:
    x = Tensor(rng.normal(size=(6, 3)))
    p = _scan(3, rng, alpha=0.0)
    q, k, v = (x.data @ w.data for w in (p.w_q, p.w_k, p.w_v))
    expected = np.tril(q @ k.T) @ v
    np.testing.assert_allclose(mamba2_scan(x, p).data, expected, atol=1e-12)


def test_scan_large_alpha_keeps_only_current_token(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(5, 3)))
    p = _scan(3, rng, alpha=1e6)
    q, k, v = (x.data @ w.data for w in (p.w_q, p.w_k, p.w_v))
    expected = np.sum(k * q, axis=1, keepdims=True) * v
    np.testing.assert_allclose(mamba2_scan(x, p).data, expected, atol=1e-9)


def test_scan_constant_decay_is_geometric(rng: np.random.Generator) -> None:
    dim = 2
    x = Tensor(rng.normal(size=(4, dim)))
    p = _scan(dim, rng, alpha=0.5)
    p.w_delta.data[...] = 0.0
    g = float(decay_factors(np.zeros(1), 0.5)[0])
    assert g == pytest.approx(math.exp(-math.log(2.0) * 0.5))
    q, k, v = (x.data @ w.data for w in (p.w_q, p.w_k, p.w_v))
    t = 3
    expected = sum(g ** (t - i) * float(k[i] @ q[t]) * v[i] for i in range(t + 1))
    np.testing.assert_allclose(mamba2_scan(x, p).data[t], expected, atol=1e-12)


def test_scan_is_causal(rng: np.random.Generator) -> None:
    x = rng.normal(size=(8, 3))
    p = _scan(3, rng)
    base = mamba2_scan(Tensor(x), p).data
    changed = x.copy()
    changed[5:] += 10.0
    out = mamba2_scan(Tensor(changed), p).data
    assert np.array_equal(out[:5], base[:5])
    assert not np.allclose(out[5:], base[5:])


def test_decay_factors_stay_in_unit_interval() -> None:
    g = decay_factors(np.array([-800.0, -5.0, 0.0, 5.0, 800.0]), 1.0)
    assert np.all(np.isfinite(g))
    assert np.all((g >= 0.0) & (g <= 1.0))
    assert g[0] == pytest.approx(1.0)
    assert np.all(np.diff(g) <= 0.0)


def test_mixers_reject_wrong_width(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(4, 5)))
    with pytest.raises(ShapeError):
        mixer_forward(x, _attention(4, rng))
    with pytest.raises(ShapeError):
        mixer_forward(x, _scan(4, rng))


def test_params_validate_shapes(rng: np.random.Generator) -> None:
    with pytest.raises(ShapeError):
        AttentionParams(
            Tensor(np.ones((3, 3))), Tensor(np.ones((3, 2))), Tensor(np.ones((3, 3)))
        )
    with pytest.raises(ShapeError):
        Mamba2Params(
            *(Tensor(np.ones((3, 3))) for _ in range(3)),
            Tensor(np.ones((1, 3))),
            Tensor(1.0),
        )


def test_init_is_deterministic() -> None:
    a = Mamba2Params.init(4, np.random.default_rng(3))
    b = Mamba2Params.init(4, np.random.default_rng(3))
    for name, param in a.parameters().items():
        assert np.array_equal(param.data, b.parameters()[name].data)
    assert float(a.alpha.data) == 1.0


def _transient(params: AttentionParams | Mamba2Params, length: int, dim: int) -> int:
    x = Tensor(np.random.default_rng(0).normal(size=(length, dim)))
    with no_grad(), measure_allocations() as meter:
        y = mixer_forward(x, params)
        out_bytes = y.data.nbytes
    return meter.peak_bytes - out_bytes


def test_attention_memory_grows_quadratically(rng: np.random.Generator) -> None:
    dim = 8
    p = _attention(dim, rng)
    small = _transient(p, 256, dim)
    large = _transient(p, 512, dim)
    assert large >= 512 * 512 * 8
    assert large / small >= 3.5


def test_scan_memory_is_flat(rng: np.random.Generator) -> None:
    dim = 8
    p = _scan(dim, rng)
    small = _transient(p, 64, dim)
    large = _transient(p, 512, dim)
    assert large <= 1.5 * small
