"""Plain teacher and student backbones

A model is a patch embedding followed by `num_blocks` pre-norm blocks, each a
token mixer (attention or Mamba-2 scan) and a GELU channel mixer, both with
residual connections. There is no downsampling, so every block output is an
L×d feature map. Parameters are exposed as a flat, ordered name -> Tensor map
(`blocks.0.mixer.w_q`, `pos_embed`, ...) shared by the optimizer and the
checkpoint format.
"""

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any

import numpy as np

from .mixers import INIT_STD, AttentionParams, Mamba2Params, MixerKind, mixer_forward
from .tensor import (
    Array,
    ShapeError,
    Tensor,
    concat_rows,
    expand,
    fill_rows,
    gelu,
    matmul,
    mean,
    sqrt,
)

if TYPE_CHECKING:
    from .distill.masking import MaskSpec

logger = logging.getLogger(__name__)

NORM_EPS = 1e-6
INPUT_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    name: str
    embed_dim: int
    mlp_dim: int
    num_blocks: int
    patch_size: int
    image_size: int
    mixer_kind: MixerKind
    channels: int = 3
    use_class_token: bool = True
    use_mask_token: bool = False
    num_heads: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "mixer_kind", MixerKind(self.mixer_kind))
        for key in ("embed_dim", "mlp_dim", "patch_size", "image_size", "channels"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")
        if self.num_blocks < 0:
            raise ValueError(f"num_blocks must be >= 0, got {self.num_blocks}")
        if self.image_size % self.patch_size:
            raise ValueError(
                f"image_size {self.image_size} is not divisible by "
                f"patch_size {self.patch_size}"
            )
        if self.num_heads != 1:
            raise ValueError(
                f"only single-head mixers are supported, got num_heads={self.num_heads}"
            )

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size**2

    @property
    def seq_len(self) -> int:
        return self.num_patches + int(self.use_class_token)

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def patch_offset(self) -> int:
        """Row index of patch 0 in the token sequence"""
        return int(self.use_class_token)

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "ModelConfig":
        try:
            base = MODEL_PRESETS[name]
        except KeyError:
            known = ", ".join(sorted(MODEL_PRESETS))
            raise ValueError(
                f"Unknown model preset '{name}', known: {known}"
            ) from None
        return replace(base, **overrides) if overrides else base

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "embed_dim": self.embed_dim,
            "mlp_dim": self.mlp_dim,
            "num_blocks": self.num_blocks,
            "patch_size": self.patch_size,
            "image_size": self.image_size,
            "mixer_kind": self.mixer_kind.value,
            "channels": self.channels,
            "use_class_token": self.use_class_token,
            "use_mask_token": self.use_mask_token,
            "num_heads": self.num_heads,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelConfig":
        return cls(**dict(data))


_ATT = MixerKind.ATTENTION
_SCAN = MixerKind.MAMBA2

MODEL_PRESETS: dict[str, ModelConfig] = {
    "teacher-base": ModelConfig("teacher-base", 768, 3072, 12, 16, 224, _ATT),
    "teacher-large": ModelConfig("teacher-large", 1024, 4096, 24, 14, 224, _ATT),
    "student-small": ModelConfig(
        "student-small", 512, 1280, 12, 16, 224, _SCAN, use_mask_token=True
    ),
    "student-base": ModelConfig(
        "student-base", 768, 1920, 12, 16, 224, _SCAN, use_mask_token=True
    ),
    "student-large": ModelConfig(
        "student-large", 1024, 2560, 24, 14, 224, _SCAN, use_mask_token=True
    ),
    "teacher-toy": ModelConfig("teacher-toy", 64, 256, 4, 4, 32, _ATT),
    "student-toy": ModelConfig(
        "student-toy", 64, 160, 4, 4, 32, _SCAN, use_mask_token=True
    ),
}


def _normal(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(0.0, INIT_STD, size=shape), requires_grad=True)


def _zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(*shape: int) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


@dataclass
class BlockParams:
    mixer: AttentionParams | Mamba2Params
    norm1_gain: Tensor
    norm1_bias: Tensor
    norm2_gain: Tensor
    norm2_bias: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "BlockParams":
        d, h = config.embed_dim, config.mlp_dim
        mixer: AttentionParams | Mamba2Params
        if config.mixer_kind is MixerKind.ATTENTION:
            mixer = AttentionParams.init(d, rng)
        else:
            mixer = Mamba2Params.init(d, rng)
        return cls(
            mixer=mixer,
            norm1_gain=_ones(1, d),
            norm1_bias=_zeros(1, d),
            norm2_gain=_ones(1, d),
            norm2_bias=_zeros(1, d),
            mlp_w1=_normal(rng, d, h),
            mlp_b1=_zeros(1, h),
            mlp_w2=_normal(rng, h, d),
            mlp_b2=_zeros(1, d),
        )

    def parameters(self) -> dict[str, Tensor]:
        params = {f"mixer.{k}": v for k, v in self.mixer.parameters().items()}
        params.update(
            {
                "norm1.gain": self.norm1_gain,
                "norm1.bias": self.norm1_bias,
                "norm2.gain": self.norm2_gain,
                "norm2.bias": self.norm2_bias,
                "mlp.w1": self.mlp_w1,
                "mlp.b1": self.mlp_b1,
                "mlp.w2": self.mlp_w2,
                "mlp.b2": self.mlp_b2,
            }
        )
        return params


@dataclass
class StudentExtras:
    """Student-only parameters: the shared [mask] token and the projection
    into the teacher's latent space used before masked prediction."""

    mask_token: Tensor
    projection: Tensor

    def parameters(self) -> dict[str, Tensor]:
        return {"mask_token": self.mask_token, "projection": self.projection}


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = NORM_EPS) -> Tensor:
    centered = x - expand(mean(x, axis=1), x.shape)
    var = mean(centered * centered, axis=1)
    normed = centered / expand(sqrt(var + eps), x.shape)
    return normed * expand(gain, x.shape) + expand(bias, x.shape)


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    out = matmul(x, w)
    return out + expand(b, out.shape)


def block_forward(x: Tensor, block: BlockParams) -> Tensor:
    h = layer_norm(x, block.norm1_gain, block.norm1_bias)
    x = x + mixer_forward(h, block.mixer)
    h = layer_norm(x, block.norm2_gain, block.norm2_bias)
    h = gelu(_linear(h, block.mlp_w1, block.mlp_b1))
    return x + _linear(h, block.mlp_w2, block.mlp_b2)


@dataclass
class Model:
    config: ModelConfig
    patch_w: Tensor
    patch_b: Tensor
    pos_embed: Tensor
    blocks: list[BlockParams] = field(default_factory=list)
    cls_token: Tensor | None = None
    extras: StudentExtras | None = None

    @classmethod
    def init(
        cls,
        config: ModelConfig,
        rng: np.random.Generator,
        teacher_dim: int | None = None,
    ) -> "Model":
        d = config.embed_dim
        model = cls(
            config=config,
            patch_w=_normal(rng, config.patch_dim, d),
            patch_b=_zeros(1, d),
            pos_embed=_normal(rng, config.seq_len, d),
            blocks=[BlockParams.init(config, rng) for _ in range(config.num_blocks)],
        )
        if config.use_class_token:
            model.cls_token = _normal(rng, 1, d)
        if config.use_mask_token:
            model.extras = StudentExtras(
                mask_token=_normal(rng, 1, d),
                projection=_normal(rng, d, teacher_dim or d),
            )
        logger.debug(
            f"Initialised {config.name}: {model.num_parameters()} parameters, "
            f"sequence length {config.seq_len}"
        )
        return model

    def parameters(self) -> dict[str, Tensor]:
        params = {"patch_embed.w": self.patch_w, "patch_embed.b": self.patch_b}
        if self.cls_token is not None:
            params["cls_token"] = self.cls_token
        params["pos_embed"] = self.pos_embed
        for i, block in enumerate(self.blocks):
            params.update({f"blocks.{i}.{k}": v for k, v in block.parameters().items()})
        if self.extras is not None:
            params.update(self.extras.parameters())
        return params

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def freeze(self) -> "Model":
        for param in self.parameters().values():
            param.requires_grad = False
            param.grad = None
        return self

    def zero_grad(self) -> None:
        for param in self.parameters().values():
            param.zero_grad()

    def state_dict(self) -> dict[str, Array]:
        return {name: p.numpy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: Mapping[str, Array]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise KeyError(
                f"State does not match {self.config.name}: "
                f"missing={missing}, unexpected={unexpected}"
            )
        for name, param in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ShapeError(
                    f"{name}: expected shape {param.shape}, got {value.shape}"
                )
            param.data[...] = value

    def embed(self, tokens: Tensor, mask: "MaskSpec | None" = None) -> Tensor:
        cfg = self.config
        if tokens.shape != (cfg.num_patches, cfg.patch_dim):
            raise ShapeError(
                f"{cfg.name} expects tokens of shape "
                f"{(cfg.num_patches, cfg.patch_dim)}, got {tokens.shape}"
            )
        x = _linear(tokens, self.patch_w, self.patch_b)
        if mask is not None:
            if self.extras is None:
                raise ValueError(f"{cfg.name} has no [mask] token to apply a mask")
            if mask.masked:
                x = fill_rows(x, self.extras.mask_token, mask.masked)
        if self.cls_token is not None:
            x = concat_rows([self.cls_token, x])
        return x + self.pos_embed

    def forward(
        self,
        tokens: Tensor,
        mask: "MaskSpec | None" = None,
        taps: Iterable[int] = (),
    ) -> tuple[Tensor, list[Tensor]]:
        """Run the backbone, returning the final map and the maps after
        each block listed in `taps` (1-based block indices)."""
        tap_set = set(taps)
        bad = [t for t in tap_set if not 1 <= t <= len(self.blocks)]
        if bad:
            raise ValueError(
                f"taps {sorted(bad)} out of range for {len(self.blocks)} blocks"
            )
        x = self.embed(tokens, mask)
        stages: list[Tensor] = []
        for i, block in enumerate(self.blocks, start=1):
            x = block_forward(x, block)
            if i in tap_set:
                stages.append(x)
        return x, stages


def patchify(image: Array | Tensor, patch_size: int) -> Tensor:
    """Split an H×W×C image into row-major flattened p×p patches"""
    data = image.data if isinstance(image, Tensor) else np.asarray(image, np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.ndim != 3:
        raise ShapeError(f"patchify needs an H×W×C image, got shape {data.shape}")
    h, w, c = data.shape
    p = patch_size
    if h % p or w % p:
        raise ShapeError(f"image {h}×{w} is not divisible into {p}×{p} patches")
    patches = data.reshape(h // p, p, w // p, p, c).transpose(0, 2, 1, 3, 4)
    return Tensor(patches.reshape((h // p) * (w // p), p * p * c))


def standardize(image: Array | Tensor) -> Array:
    """Per-channel zero mean and unit variance over one H×W×C image

    Flat channels map to zero.
    """
    data = image.data if isinstance(image, Tensor) else np.asarray(image, np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.ndim != 3:
        raise ShapeError(f"standardize needs an H×W×C image, got shape {data.shape}")
    centered = data - data.mean(axis=(0, 1), keepdims=True)
    std = data.std(axis=(0, 1), keepdims=True)
    return np.asarray(centered / np.maximum(std, INPUT_EPS))


def image_tokens(image: Array | Tensor, patch_size: int) -> Tensor:
    """Model input for a raw [0, 1] image: standardized, then patchified"""
    return patchify(standardize(image), patch_size)


def project_to_teacher(y_stu: Tensor, extras: StudentExtras) -> Tensor:
    if y_stu.ndim != 2 or y_stu.shape[1] != extras.projection.shape[0]:
        raise ShapeError(
            f"cannot project features of shape {y_stu.shape} with a "
            f"{extras.projection.shape} projection"
        )
    return matmul(y_stu, extras.projection)


def patch_rows(config: ModelConfig, indices: Sequence[int] | None = None) -> list[int]:
    """Sequence rows of the given patch indices (all patches by default)"""
    if indices is None:
        indices = range(config.num_patches)
    return [config.patch_offset + int(i) for i in indices]
