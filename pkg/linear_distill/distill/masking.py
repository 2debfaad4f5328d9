"""Patch masking for the student input

Two strategies are supported: token-wise (uniform sampling without
replacement, as in MAE) and block-wise (rectangles on the patch grid, as in
BEiT). Both mask exactly round(a * L_patch) patches, rounding halves up.
"""

import enum
import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

logger = logging.getLogger(__name__)

MIN_BLOCK_PATCHES = 16
MIN_ASPECT = 0.3
BLOCK_ATTEMPTS = 10


class MaskStrategy(str, enum.Enum):
    TOKEN_WISE = "token_wise"
    BLOCK_WISE = "block_wise"


@dataclass(frozen=True)
class MaskSpec:
    ratio: float
    num_patches: int
    masked: tuple[int, ...]
    visible: tuple[int, ...]
    strategy: MaskStrategy = MaskStrategy.TOKEN_WISE

    def __post_init__(self) -> None:
        if set(self.masked) & set(self.visible):
            raise ValueError("masked and visible patch sets overlap")
        if sorted(self.masked + self.visible) != list(range(self.num_patches)):
            raise ValueError(
                f"masked and visible sets do not cover {self.num_patches} patches"
            )

    @classmethod
    def from_masked(
        cls,
        masked: Iterable[int] | npt.NDArray[np.intp],
        num_patches: int,
        strategy: MaskStrategy = MaskStrategy.TOKEN_WISE,
    ) -> "MaskSpec":
        chosen = sorted({int(i) for i in masked})
        taken = set(chosen)
        visible = tuple(i for i in range(num_patches) if i not in taken)
        ratio = len(chosen) / num_patches if num_patches else 0.0
        return cls(ratio, num_patches, tuple(chosen), visible, strategy)

    @classmethod
    def empty(cls, num_patches: int) -> "MaskSpec":
        return cls.from_masked((), num_patches)

    @property
    def is_empty(self) -> bool:
        return not self.masked


def mask_count(num_patches: int, ratio: float) -> int:
    return int(math.floor(ratio * num_patches + 0.5))


def _grid(num_patches: int) -> tuple[int, int]:
    side = math.isqrt(num_patches)
    if side * side != num_patches:
        raise ValueError(
            f"block-wise masking needs a square patch grid, got {num_patches} patches"
        )
    return side, side


def _mask_block(
    grid: npt.NDArray[np.bool_], max_patches: int, rng: np.random.Generator
) -> int:
    height, width = grid.shape
    min_patches = min(MIN_BLOCK_PATCHES, max_patches)
    log_aspect = (math.log(MIN_ASPECT), math.log(1.0 / MIN_ASPECT))
    delta = 0
    for _ in range(BLOCK_ATTEMPTS):
        target_area = rng.uniform(min_patches, max_patches)
        aspect = math.exp(rng.uniform(*log_aspect))
        h = int(round(math.sqrt(target_area * aspect)))
        w = int(round(math.sqrt(target_area / aspect)))
        if 0 < w < width and 0 < h < height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            window = grid[top : top + h, left : left + w]
            fresh = h * w - int(window.sum())
            if 0 < fresh <= max_patches:
                window[...] = True
                delta = fresh
        if delta > 0:
            break
    return delta


def _block_wise(
    num_patches: int, count: int, rng: np.random.Generator
) -> npt.NDArray[np.intp]:
    grid = np.zeros(_grid(num_patches), dtype=bool)
    masked = 0
    while masked < count:
        delta = _mask_block(grid, count - masked, rng)
        if delta == 0:
            break
        masked += delta
    if masked < count:
        flat = grid.reshape(-1)
        free = np.flatnonzero(~flat)
        extra = rng.choice(free, size=count - masked, replace=False)
        flat[extra] = True
        logger.warning(
            f"Block-wise masking placed {masked}/{count} patches in blocks, "
            f"topped up {count - masked} at random"
        )
    return np.flatnonzero(grid.reshape(-1))


def sample_mask(
    num_patches: int,
    ratio: float,
    strategy: MaskStrategy | str,
    rng: np.random.Generator,
) -> MaskSpec:
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"mask ratio must be within [0, 1], got {ratio}")
    strategy = MaskStrategy(strategy)
    count = mask_count(num_patches, ratio)
    if count == 0:
        indices: npt.NDArray[np.intp] = np.empty(0, dtype=np.intp)
    elif strategy is MaskStrategy.TOKEN_WISE:
        indices = rng.permutation(num_patches)[:count]
    else:
        indices = _block_wise(num_patches, count, rng)
    spec = MaskSpec.from_masked(indices, num_patches, strategy)
    return MaskSpec(ratio, num_patches, spec.masked, spec.visible, strategy)
