"""Token mixers: single-head softmax attention and the Mamba-2 recurrence"""

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    Array,
    Function,
    ShapeError,
    Tensor,
    is_grad_enabled,
    matmul,
    scale,
    softmax_rows,
    stable_sigmoid,
    stable_softplus,
    track_allocation,
)

logger = logging.getLogger(__name__)

INIT_STD = 0.02


class MixerKind(str, enum.Enum):
    ATTENTION = "attention"
    MAMBA2 = "mamba2"


def _normal(rng: np.random.Generator, shape: tuple[int, ...], std: float) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def _check_square(name: str, weight: Tensor, dim: int) -> None:
    if weight.shape != (dim, dim):
        raise ShapeError(f"{name} must be {dim}x{dim}, got {weight.shape}")


@dataclass
class AttentionParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor

    def __post_init__(self) -> None:
        dim = self.w_q.shape[0]
        for name, weight in self.parameters().items():
            _check_square(name, weight, dim)

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "AttentionParams":
        return cls(*(_normal(rng, (dim, dim), INIT_STD) for _ in range(3)))

    def parameters(self) -> dict[str, Tensor]:
        return {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v}


@dataclass
class Mamba2Params:
    """Projections plus the per-token step size `w_delta` and decay `alpha`

    alpha is unconstrained; the decay exp(-softplus(delta) * alpha) stays in
    (0, 1] as long as alpha >= 0.
    """

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_delta: Tensor
    alpha: Tensor

    def __post_init__(self) -> None:
        dim = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v"):
            _check_square(name, getattr(self, name), dim)
        if self.w_delta.shape != (dim, 1):
            raise ShapeError(f"w_delta must be {dim}x1, got {self.w_delta.shape}")
        if self.alpha.shape != ():
            raise ShapeError(f"alpha must be a scalar, got shape {self.alpha.shape}")

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def init(
        cls, dim: int, rng: np.random.Generator, alpha: float = 1.0
    ) -> "Mamba2Params":
        w_q, w_k, w_v = (_normal(rng, (dim, dim), INIT_STD) for _ in range(3))
        w_delta = _normal(rng, (dim, 1), INIT_STD)
        return cls(w_q, w_k, w_v, w_delta, Tensor(alpha, requires_grad=True))

    def parameters(self) -> dict[str, Tensor]:
        return {
            "w_q": self.w_q,
            "w_k": self.w_k,
            "w_v": self.w_v,
            "w_delta": self.w_delta,
            "alpha": self.alpha,
        }


@dataclass
class HiddenState:
    """Running d×d outer-product accumulator, S_0 = 0"""

    s: Array

    @classmethod
    def zeros(cls, dim: int) -> "HiddenState":
        s = np.zeros((dim, dim))
        track_allocation(s)
        return cls(s)

    def update(self, decay: float, v: Array, k: Array) -> None:
        self.s *= decay
        outer = np.outer(v, k)
        track_allocation(outer)
        self.s += outer

    def read(self, q: Array) -> Array:
        out: Array = self.s @ q
        track_allocation(out)
        return out


def _check_input(x: Tensor, dim: int, mixer: str) -> None:
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != dim:
        raise ShapeError(
            f"{mixer}: input of shape {x.shape} does not match embed dim {dim}"
        )


def attention_weights(x: Tensor, p: AttentionParams) -> Tensor:
    """Row-stochastic L×L matrix softmax(q k^T / sqrt(d))"""
    _check_input(x, p.dim, "attention")
    q = matmul(x, p.w_q)
    k = matmul(x, p.w_k)
    return softmax_rows(scale(matmul(q, k.T), 1.0 / math.sqrt(p.dim)))


def attention_forward(x: Tensor, p: AttentionParams) -> Tensor:
    weights = attention_weights(x, p)
    return matmul(weights, matmul(x, p.w_v))


def decay_factors(delta: Array, alpha: float) -> Array:
    return np.asarray(np.exp(-stable_softplus(delta) * alpha))


class _Mamba2Scan(Function):
    """Left-to-right scan S_t = g_t S_{t-1} + v_t k_t^T, y_t = S_t q_t

    Projections are taken one token at a time so that, without gradient
    recording, the working set is the d×d state plus O(d) per token.
    When recording, q/k/v/delta and every S_t are kept for `backward`.
    """

    name = "mamba2_scan"

    def forward(  # type: ignore[override]
        self,
        x: Array,
        w_q: Array,
        w_k: Array,
        w_v: Array,
        w_delta: Array,
        alpha: Array,
        save: bool = False,
    ) -> Array:
        length, dim = x.shape
        alpha_value = float(alpha)
        y = np.empty((length, dim))
        track_allocation(y)
        state = HiddenState.zeros(dim)
        if save:
            self.x = x
            self.weights = (w_q, w_k, w_v, w_delta)
            self.alpha = alpha_value
            self.q = np.empty((length, dim))
            self.k = np.empty((length, dim))
            self.v = np.empty((length, dim))
            self.delta = np.empty(length)
            self.g = np.empty(length)
            self.states = np.empty((length, dim, dim))
            for buf in (self.q, self.k, self.v, self.delta, self.g, self.states):
                track_allocation(buf)
        for t in range(length):
            x_t = x[t]
            q_t = x_t @ w_q
            k_t = x_t @ w_k
            v_t = x_t @ w_v
            for buf in (q_t, k_t, v_t):
                track_allocation(buf)
            delta_t = float(x_t @ w_delta[:, 0])
            g_t = math.exp(-float(stable_softplus(np.asarray(delta_t))) * alpha_value)
            state.update(g_t, v_t, k_t)
            y[t] = state.read(q_t)
            if save:
                self.q[t], self.k[t], self.v[t] = q_t, k_t, v_t
                self.delta[t], self.g[t] = delta_t, g_t
                self.states[t] = state.s
        return y

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        length, dim = self.x.shape
        w_q, w_k, w_v, w_delta = self.weights
        adj = np.zeros((dim, dim))
        dq = np.empty((length, dim))
        dk = np.empty((length, dim))
        dv = np.empty((length, dim))
        dg = np.zeros(length)
        for t in reversed(range(length)):
            if t < length - 1:
                adj *= self.g[t + 1]
            adj += np.outer(grad[t], self.q[t])
            dq[t] = self.states[t].T @ grad[t]
            dv[t] = adj @ self.k[t]
            dk[t] = adj.T @ self.v[t]
            if t > 0:
                dg[t] = float(np.sum(adj * self.states[t - 1]))
        softplus_delta = stable_softplus(self.delta)
        dg_scaled = dg * self.g
        d_delta = -self.alpha * dg_scaled * stable_sigmoid(self.delta)
        d_alpha = np.asarray(-np.sum(dg_scaled * softplus_delta))
        x = self.x
        dx = dq @ w_q.T + dk @ w_k.T + dv @ w_v.T + np.outer(d_delta, w_delta[:, 0])
        return (
            dx,
            x.T @ dq,
            x.T @ dk,
            x.T @ dv,
            (x.T @ d_delta).reshape(dim, 1),
            d_alpha,
        )


def mamba2_scan(x: Tensor, p: Mamba2Params) -> Tensor:
    _check_input(x, p.dim, "mamba2_scan")
    inputs = (x, p.w_q, p.w_k, p.w_v, p.w_delta, p.alpha)
    save = is_grad_enabled() and any(t.requires_grad for t in inputs)
    return _Mamba2Scan.apply(*inputs, save=save)


def mamba2_unrolled_oracle(x: Tensor, p: Mamba2Params) -> Tensor:
    """y_t = sum_{i<=t} (prod_{j=i+1..t} g_j) (k_i . q_t) v_i, by double loop"""
    _check_input(x, p.dim, "mamba2_unrolled_oracle")
    xs = x.data
    q = xs @ p.w_q.data
    k = xs @ p.w_k.data
    v = xs @ p.w_v.data
    g = decay_factors(xs @ p.w_delta.data[:, 0], float(p.alpha.data))
    length, dim = xs.shape
    y = np.zeros((length, dim))
    for t in range(length):
        for i in range(t + 1):
            coef = float(np.prod(g[i + 1 : t + 1]))
            y[t] += coef * float(k[i] @ q[t]) * v[i]
    return Tensor(y)


def mixer_forward(x: Tensor, params: AttentionParams | Mamba2Params) -> Tensor:
    if isinstance(params, AttentionParams):
        return attention_forward(x, params)
    return mamba2_scan(x, params)
