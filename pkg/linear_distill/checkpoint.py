"""JSON checkpoints for teacher and student models

Layout::

    {
      "format": "linear-distill-checkpoint",
      "version": 1,
      "config": {...ModelConfig fields...},
      "teacher_dim": 64,            # projection width, null without extras
      "parameters": {
        "patch_embed.w": {"shape": [48, 64], "values": [...row-major...]},
        ...
      }
    }

Floats are written with their shortest round-tripping repr, so a
save/load cycle is bit-exact.
"""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from .model import Model, ModelConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "linear-distill-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointWriteError(OSError):
    pass


def to_primitive(model: Model) -> dict[str, Any]:
    teacher_dim = None
    if model.extras is not None:
        teacher_dim = model.extras.projection.shape[1]
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "teacher_dim": teacher_dim,
        "parameters": {
            name: {"shape": list(param.shape), "values": param.data.ravel().tolist()}
            for name, param in model.parameters().items()
        },
    }


def from_primitive(payload: dict[str, Any]) -> Model:
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Not a checkpoint: format={payload.get('format')!r}")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint version {payload.get('version')!r}"
        )
    config = ModelConfig.from_dict(payload["config"])
    # values are overwritten below, the generator only shapes the skeleton
    model = Model.init(config, np.random.default_rng(0), payload.get("teacher_dim"))
    state = {}
    for name, entry in payload["parameters"].items():
        values = np.asarray(entry["values"], dtype=np.float64)
        try:
            state[name] = values.reshape(entry["shape"])
        except ValueError as e:
            raise CheckpointError(f"{name}: {e}") from e
    model.load_state_dict(state)
    return model


def save_checkpoint(model: Model, path: Path) -> Path:
    path = Path(path)
    payload = to_primitive(model)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            json.dump(payload, f)
    except OSError as e:
        raise CheckpointWriteError(f"Cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved {model.config.name} checkpoint to {path}")
    return path


def load_checkpoint(path: Path) -> Model:
    path = Path(path)
    try:
        with path.open() as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path} is not valid JSON: {e}") from e
    model = from_primitive(payload)
    logger.debug(f"Loaded {model.config.name} checkpoint from {path}")
    return model
