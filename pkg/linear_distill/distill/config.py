"""Distillation settings: presets, TOML files and KEY=VALUE overrides

Keys are flat and match the `DistillConfig` field names one to one.
Resolution order is preset, then file, then overrides.
"""

import dataclasses
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import toml

from ..model import MODEL_PRESETS, ModelConfig
from .masking import MaskStrategy

logger = logging.getLogger(__name__)

MATCHING_SCOPES = ("class_only", "visible_only", "all")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DistillConfig:
    teacher_model: str = "teacher-base"
    student_model: str = "student-base"
    channels: int = 3
    num_stages: int = 4
    mask_ratio: float = 0.75
    mask_strategy: str = MaskStrategy.TOKEN_WISE.value
    matching_scope: str = "visible_only"
    loss_lambda: float = 1.0
    smooth_l1_beta: float = 1.0
    use_activation_matching: bool = True
    use_masked_prediction: bool = True
    lr: float = 1.5e-3
    min_lr: float = 1e-5
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup_steps: int = 5
    steps: int = 100
    batch_size: int = 16
    seed: int = 0
    data: str = "synthetic"
    log_every: int = 10
    probe_size: int = 8
    teacher_steps: int = 0
    teacher_lr: float = 1e-3

    def __post_init__(self) -> None:
        problems = list(self._problems())
        if problems:
            raise ConfigError("Invalid config: " + "; ".join(problems))

    def _problems(self) -> Iterable[str]:
        for key in ("teacher_model", "student_model"):
            if getattr(self, key) not in MODEL_PRESETS:
                yield f"{key}={getattr(self, key)!r} is not a model preset"
        if self.loss_lambda <= 0:
            yield f"loss_lambda must be > 0, got {self.loss_lambda}"
        if self.num_stages < 1:
            yield f"num_stages must be >= 1, got {self.num_stages}"
        if not 0.0 <= self.mask_ratio <= 1.0:
            yield f"mask_ratio must be within [0, 1], got {self.mask_ratio}"
        if self.mask_strategy not in {s.value for s in MaskStrategy}:
            yield f"mask_strategy={self.mask_strategy!r} is unknown"
        if self.matching_scope not in MATCHING_SCOPES:
            yield f"matching_scope={self.matching_scope!r} is unknown"
        if not (self.use_activation_matching or self.use_masked_prediction):
            yield "at least one of activation matching / masked prediction is needed"
        if self.use_masked_prediction and self.mask_ratio == 0:
            yield "masked prediction needs mask_ratio > 0"
        if self.smooth_l1_beta <= 0:
            yield f"smooth_l1_beta must be > 0, got {self.smooth_l1_beta}"
        if self.lr < 0 or self.min_lr < 0 or self.teacher_lr < 0:
            yield "learning rates must be >= 0"
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            yield f"betas must be within [0, 1), got {self.beta1}, {self.beta2}"
        for key in ("warmup_steps", "steps", "teacher_steps", "seed"):
            if getattr(self, key) < 0:
                yield f"{key} must be >= 0, got {getattr(self, key)}"
        for key in ("batch_size", "log_every", "probe_size", "channels"):
            if getattr(self, key) < 1:
                yield f"{key} must be >= 1, got {getattr(self, key)}"

    def teacher_config(self) -> ModelConfig:
        return ModelConfig.preset(self.teacher_model, channels=self.channels)

    def student_config(self) -> ModelConfig:
        return ModelConfig.preset(self.student_model, channels=self.channels)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes: Any) -> "DistillConfig":
        return from_mapping(changes, base=self)


PRESETS: dict[str, DistillConfig] = {
    "default": DistillConfig(),
    "toy": DistillConfig(
        teacher_model="teacher-toy",
        student_model="student-toy",
        num_stages=2,
        warmup_steps=25,
        steps=500,
        batch_size=16,
        log_every=10,
        teacher_steps=100,
    ),
    "smoke": DistillConfig(
        teacher_model="teacher-toy",
        student_model="student-toy",
        num_stages=2,
        warmup_steps=1,
        steps=3,
        batch_size=2,
        log_every=1,
        probe_size=2,
        teacher_steps=2,
    ),
}


def config_keys() -> list[str]:
    return [f.name for f in fields(DistillConfig)]


def _coerce(key: str, value: Any, target: type) -> Any:
    if target is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ConfigError(f"{key}: cannot read {value!r} as a boolean")
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected {target.__name__}, got a boolean")
    try:
        if target is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        return target(value)
    except (TypeError, ValueError):
        raise ConfigError(
            f"{key}: cannot read {value!r} as {target.__name__}"
        ) from None


def from_mapping(
    values: Mapping[str, Any], base: DistillConfig | None = None
) -> DistillConfig:
    """Apply flat key/value pairs on top of `base`, coercing to field types"""
    base = base or DistillConfig()
    types = {f.name: type(getattr(base, f.name)) for f in fields(DistillConfig)}
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}")
    changes = {key: _coerce(key, value, types[key]) for key, value in values.items()}
    return dataclasses.replace(base, **changes)


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    bad = []
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            bad.append(item)
            continue
        overrides[key.strip()] = value.strip()
    if bad:
        raise ConfigError(f"Overrides must look like KEY=VALUE, got: {bad}")
    return overrides


def load_config_file(path: Path) -> dict[str, Any]:
    path = Path(path)
    try:
        with path.open() as f:
            data = toml.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file {path} does not exist") from None
    except toml.TomlDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid TOML: {e}") from e
    nested = sorted(k for k, v in data.items() if isinstance(v, dict))
    if nested:
        raise ConfigError(f"Config file {path} must be flat, got tables: {nested}")
    return dict(data)


def resolve_config(
    preset: str = "default",
    config_file: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> DistillConfig:
    try:
        config = PRESETS[preset]
    except KeyError:
        raise ConfigError(
            f"Unknown preset '{preset}', known: {', '.join(PRESETS)}"
        ) from None
    if config_file is not None:
        config = from_mapping(load_config_file(config_file), base=config)
        logger.debug(f"Applied config file {config_file}")
    if overrides:
        config = from_mapping(overrides, base=config)
        logger.debug(f"Applied overrides {dict(overrides)}")
    return config
