"""Supervised warm-up of the attention teacher on labelled images

The teacher gets a linear head on its class token (mean-pooled tokens when
it has none) and is trained with cross-entropy. The head is dropped
afterwards: distillation only uses the backbone.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ..data.common import DataSource, Sample
from ..model import Model, ModelConfig, image_tokens
from ..tensor import (
    NonFiniteError,
    Tensor,
    backward,
    expand,
    log,
    matmul,
    mean,
    mul,
    scale,
    softmax_rows,
    sum,
    take_rows,
)
from .optim import AdamW, WarmupCosine, grad_norm

logger = logging.getLogger(__name__)

HEAD_STD = 0.02


@dataclass
class ClassifierHead:
    w: Tensor
    b: Tensor

    @classmethod
    def init(
        cls, dim: int, num_classes: int, rng: np.random.Generator
    ) -> "ClassifierHead":
        w = rng.normal(0.0, HEAD_STD, size=(dim, num_classes))
        return cls(
            Tensor(w, requires_grad=True),
            Tensor(np.zeros((1, num_classes)), requires_grad=True),
        )

    def parameters(self) -> dict[str, Tensor]:
        return {"head.w": self.w, "head.b": self.b}


@dataclass
class PretrainMetrics:
    step: int
    loss: float
    accuracy: float
    grad_norm: float
    lr: float


def _pooled(model: Model, final: Tensor) -> Tensor:
    if model.cls_token is not None:
        return take_rows(final, [0])
    return mean(final, axis=0)


def classification_loss(
    model: Model, head: ClassifierHead, sample: Sample
) -> tuple[Tensor, int]:
    """Cross-entropy of one sample and the predicted class"""
    tokens = image_tokens(sample.image, model.config.patch_size)
    final, _ = model.forward(tokens)
    logits = matmul(_pooled(model, final), head.w)
    logits = logits + expand(head.b, logits.shape)
    probs = softmax_rows(logits)
    target = np.zeros(probs.shape)
    target[0, sample.label] = 1.0
    loss = scale(sum(mul(log(probs), Tensor(target))), -1.0)
    return loss, int(np.argmax(probs.data[0]))


def pretrain_teacher(
    config: ModelConfig,
    source: DataSource,
    steps: int,
    batch_size: int,
    seed: int,
    lr: float = 1e-3,
    weight_decay: float = 0.05,
    on_step: Callable[[PretrainMetrics], None] | None = None,
) -> tuple[Model, list[PretrainMetrics]]:
    rng = np.random.default_rng([seed, 0])
    model = Model.init(config, rng)
    head = ClassifierHead.init(config.embed_dim, source.num_classes, rng)
    params = {**model.parameters(), **head.parameters()}
    warmup = min(10, max(1, steps // 10))
    optimizer = AdamW(
        params,
        WarmupCosine(peak=lr, floor=lr * 0.01, warmup_steps=warmup, total_steps=steps),
        weight_decay=weight_decay,
    )
    logger.info(
        f"Pretraining {config.name} for {steps} steps on {source.describe()} "
        f"({source.num_classes} classes)"
    )
    history: list[PretrainMetrics] = []
    for step in range(1, steps + 1):
        batch = source.batch(step - 1, batch_size)
        optimizer.zero_grad()
        total, correct = 0.0, 0
        for sample in batch:
            loss, predicted = classification_loss(model, head, sample)
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteError(f"teacher loss is {value} at step {step}")
            total += value
            correct += int(predicted == sample.label)
            backward(scale(loss, 1.0 / len(batch)))
        norm = grad_norm(params)
        used_lr = optimizer.step()
        metrics = PretrainMetrics(
            step, total / len(batch), correct / len(batch), norm, used_lr
        )
        history.append(metrics)
        if on_step is not None:
            on_step(metrics)
    if history:
        last = history[-1]
        logger.info(
            f"Teacher ready: loss {last.loss:.4f}, batch accuracy {last.accuracy:.2f}"
        )
    model.freeze()
    return model, history
