"""Binary netpbm images (P5 greyscale, P6 RGB, 8-bit) and directory sources

A directory source holds `*.pgm` / `*.ppm` / `*.pnm` files either flat (all
labelled 0) or one level deep, `DIR/<class>/<image>`, in which case labels
are the sorted class directory names' positions.
"""

import logging
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..tensor import Array
from .common import DataError, DataSource, Sample

logger = logging.getLogger(__name__)

NETPBM_SUFFIXES = (".pgm", ".ppm", ".pnm")
MAGIC_CHANNELS = {b"P5": 1, b"P6": 3}
MAX_MAXVAL = 255


def _header_fields(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """Split the first `count` whitespace-separated header tokens, skipping
    `#` comments; returns the tokens and the offset of the pixel data."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise DataError("truncated netpbm header")
        if raw[pos : pos + 1] == b"#":
            end = raw.find(b"\n", pos)
            pos = len(raw) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def decode_netpbm(raw: bytes, origin: str = "<bytes>") -> Array:
    """Decode P5/P6 bytes into an H×W×C float image in [0, 1]"""
    try:
        (magic, width, height, maxval), offset = _header_fields(raw, 4)
        channels = MAGIC_CHANNELS[magic]
        w, h, top = int(width), int(height), int(maxval)
    except KeyError:
        raise DataError(f"{origin}: only binary P5/P6 netpbm is supported") from None
    except (DataError, ValueError) as e:
        raise DataError(f"{origin}: malformed header: {e}") from e
    if not 0 < top <= MAX_MAXVAL:
        raise DataError(f"{origin}: maxval {top} is not in 1..{MAX_MAXVAL}")
    expected = w * h * channels
    if len(raw) - offset < expected:
        raise DataError(
            f"{origin}: expected {expected} pixel bytes, got {len(raw) - offset}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=offset)
    return pixels.reshape(h, w, channels).astype(np.float64) / top


def read_netpbm(path: Path) -> Array:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataError(f"Cannot read {path}: {e}") from e
    return decode_netpbm(raw, str(path))


def encode_netpbm(image: Array) -> bytes:
    data = np.asarray(image)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.ndim != 3 or data.shape[2] not in (1, 3):
        raise DataError(f"Cannot encode image of shape {data.shape} as netpbm")
    h, w, c = data.shape
    magic = b"P5" if c == 1 else b"P6"
    pixels = np.round(np.clip(data, 0.0, 1.0) * MAX_MAXVAL).astype(np.uint8)
    return b"%s\n%d %d\n%d\n" % (magic, w, h, MAX_MAXVAL) + pixels.tobytes()


def write_netpbm(path: Path, image: Array) -> Path:
    path = Path(path)
    path.write_bytes(encode_netpbm(image))
    return path


@lru_cache(maxsize=4096)
def _cached_read(path: Path) -> Array:
    image = read_netpbm(path)
    image.setflags(write=False)
    return image


class NetpbmDirectory(DataSource):
    def __init__(self, root: Path, image_size: int, channels: int, seed: int) -> None:
        super().__init__(image_size, channels, seed)
        self.root = Path(root)
        self.files, self.labels, self.class_names = self._scan()
        self._perms: dict[int, list[int]] = {}
        logger.info(
            f"Found {len(self.files)} images in {len(self.class_names)} "
            f"class(es) under {self.root}"
        )

    def _scan(self) -> tuple[list[Path], list[int], list[str]]:
        subdirs = sorted(p for p in self.root.iterdir() if p.is_dir())
        files: list[Path] = []
        labels: list[int] = []
        if subdirs:
            names = [p.name for p in subdirs]
            for label, subdir in enumerate(subdirs):
                found = sorted(
                    p for p in subdir.iterdir() if p.suffix in NETPBM_SUFFIXES
                )
                files.extend(found)
                labels.extend([label] * len(found))
        else:
            names = [self.root.name]
            files = sorted(
                p for p in self.root.iterdir() if p.suffix in NETPBM_SUFFIXES
            )
            labels = [0] * len(files)
        if not files:
            raise DataError(f"No {'/'.join(NETPBM_SUFFIXES)} images under {self.root}")
        return files, labels, names

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def _load(self, position: int) -> Sample:
        path = self.files[position]
        image = _cached_read(path)
        if image.shape[2] != self.channels:
            if image.shape[2] == 1 and self.channels == 3:
                image = np.repeat(image, 3, axis=2)
            else:
                raise DataError(
                    f"{path}: {image.shape[2]} channel(s), expected {self.channels}"
                )
        return Sample(self._check_image(image, str(path)), self.labels[position])

    def _permutation(self, epoch: int) -> list[int]:
        if epoch not in self._perms:
            rng = np.random.default_rng([self.seed, epoch])
            self._perms[epoch] = rng.permutation(len(self.files)).tolist()
        return self._perms[epoch]

    def batch(self, step: int, batch_size: int) -> list[Sample]:
        n = len(self.files)
        samples = []
        for j in range(step * batch_size, (step + 1) * batch_size):
            epoch, offset = divmod(j, n)
            samples.append(self._load(self._permutation(epoch)[offset]))
        return samples

    def probe_batch(self, size: int) -> list[Sample]:
        return [self._load(i % len(self.files)) for i in range(size)]

    def describe(self) -> str:
        return str(self.root)
