import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from ..tensor import Array, Tensor

logger = logging.getLogger(__name__)

NO_DECAY_SUFFIXES = (".b", ".bias", ".gain", ".b1", ".b2", "alpha")
NO_DECAY_NAMES = ("cls_token", "mask_token", "pos_embed")


def skips_weight_decay(name: str) -> bool:
    """Biases, norm gains, learned tokens and the scan decay are not decayed"""
    return name in NO_DECAY_NAMES or name.endswith(NO_DECAY_SUFFIXES)


@dataclass(frozen=True)
class WarmupCosine:
    """Linear warmup to `peak`, then cosine decay to `floor` at `total_steps`

    The floor is capped at the peak, so a zero peak keeps every step at zero.
    """

    peak: float
    floor: float
    warmup_steps: int
    total_steps: int

    def __call__(self, step: int) -> float:
        floor = min(self.floor, self.peak)
        if step < self.warmup_steps:
            return self.peak * (step + 1) / self.warmup_steps
        cosine_steps = max(1, self.total_steps - self.warmup_steps)
        progress = min(1.0, (step - self.warmup_steps) / cosine_steps)
        return floor + (self.peak - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Adam with decoupled weight decay over a named parameter map"""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        schedule: WarmupCosine,
        weight_decay: float = 0.05,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params = dict(params)
        self.schedule = schedule
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, Array] = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v: dict[str, Array] = {n: np.zeros_like(p.data) for n, p in params.items()}
        decayed = [n for n in self.params if not skips_weight_decay(n)]
        logger.debug(
            f"AdamW over {len(self.params)} tensors, weight decay on {len(decayed)}"
        )

    @property
    def lr(self) -> float:
        """Learning rate of the next `step`"""
        return self.schedule(self.step_count)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> float:
        lr = self.lr
        self.step_count += 1
        beta1, beta2 = self.betas
        bias1 = 1.0 - beta1**self.step_count
        bias2 = 1.0 - beta2**self.step_count
        for name, param in self.params.items():
            if param.grad is None:
                continue
            grad = param.grad
            m = self.m[name]
            v = self.v[name]
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            if lr == 0.0:
                continue
            if self.weight_decay and not skips_weight_decay(name):
                param.data *= 1.0 - lr * self.weight_decay
            param.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
        return lr


def grad_norm(params: Mapping[str, Tensor]) -> float:
    total = 0.0
    for param in params.values():
        if param.grad is not None:
            total += float(np.sum(param.grad * param.grad))
    return math.sqrt(total)
