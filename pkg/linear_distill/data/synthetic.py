"""Seeded generator of textured-shape images"""

import enum
import logging

import numpy as np

from ..tensor import Array
from .common import DataSource, Sample

logger = logging.getLogger(__name__)

TRAIN_STREAM = 0
PROBE_STREAM = 1


class ShapeKind(enum.IntEnum):
    DISC = 0
    SQUARE = 1
    TRIANGLE = 2
    STRIPES = 3


def _shape_mask(
    kind: ShapeKind,
    xs: Array,
    ys: Array,
    cx: float,
    cy: float,
    radius: float,
    angle: float,
) -> Array:
    dx, dy = xs - cx, ys - cy
    if kind is ShapeKind.DISC:
        return np.asarray(dx * dx + dy * dy <= radius * radius)
    if kind is ShapeKind.SQUARE:
        return np.asarray(np.maximum(np.abs(dx), np.abs(dy)) <= radius)
    if kind is ShapeKind.TRIANGLE:
        # apex up, base at cy + radius
        inside = (dy <= radius) & (np.abs(dx) <= (dy + radius) / 2.0)
        return np.asarray(inside)
    along = dx * np.cos(angle) + dy * np.sin(angle)
    stripes = np.floor(along / max(radius / 3.0, 1.0)) % 2 == 0
    return np.asarray(stripes & (np.maximum(np.abs(dx), np.abs(dy)) <= radius))


def synthetic_image(
    seed: int, index: int, image_size: int, channels: int = 3, stream: int = 0
) -> tuple[Array, int]:
    """Render image `index` of the given stream

    A sinusoidal background texture carries 1-3 filled shapes in random
    colours; the label is the kind of the largest shape.
    """
    rng = np.random.default_rng([seed, stream, index])
    ys, xs = np.mgrid[0:image_size, 0:image_size].astype(np.float64)

    freq = rng.uniform(0.5, 3.0, size=2) / image_size
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wave = np.sin(2.0 * np.pi * (freq[0] * xs + freq[1] * ys) + phase)
    base = rng.uniform(0.2, 0.8, size=channels)
    image = base[None, None, :] + 0.15 * wave[:, :, None]

    best_area, label = -1, 0
    for _ in range(int(rng.integers(1, 4))):
        kind = ShapeKind(int(rng.integers(len(ShapeKind))))
        radius = rng.uniform(0.12, 0.3) * image_size
        cx, cy = rng.uniform(0.2, 0.8, size=2) * image_size
        angle = rng.uniform(0.0, np.pi)
        colour = rng.uniform(0.0, 1.0, size=channels)
        mask = _shape_mask(kind, xs, ys, cx, cy, radius, angle)
        image[mask] = colour
        area = int(mask.sum())
        if area > best_area:
            best_area, label = area, int(kind)
    return np.clip(image, 0.0, 1.0), label


class SyntheticShapes(DataSource):
    """Infinite synthetic source; probe images come from a separate stream"""

    @property
    def num_classes(self) -> int:
        return len(ShapeKind)

    def _sample(self, index: int, stream: int) -> Sample:
        image, label = synthetic_image(
            self.seed, index, self.image_size, self.channels, stream
        )
        return Sample(image, label)

    def batch(self, step: int, batch_size: int) -> list[Sample]:
        start = step * batch_size
        return [self._sample(start + j, TRAIN_STREAM) for j in range(batch_size)]

    def probe_batch(self, size: int) -> list[Sample]:
        return [self._sample(j, PROBE_STREAM) for j in range(size)]

    def describe(self) -> str:
        return f"synthetic:{self.seed}"
