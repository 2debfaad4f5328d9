from pathlib import Path

import numpy as np
import pytest

from linear_distill.data.common import (
    DataError,
    DataNotFoundError,
    DataSourceKind,
    open_source,
)
from linear_distill.data.netpbm import (
    NetpbmDirectory,
    decode_netpbm,
    encode_netpbm,
    write_netpbm,
)
from linear_distill.data.synthetic import ShapeKind, SyntheticShapes, synthetic_image


def test_source_kind_detection(tmp_path: Path) -> None:
    assert DataSourceKind.get_kind("synthetic") == DataSourceKind.SYNTHETIC
    assert DataSourceKind.get_kind("synthetic:4") == DataSourceKind.SUPPORTED
    assert DataSourceKind.get_kind(str(tmp_path)) == DataSourceKind.FILESYSTEM
    assert DataSourceKind.get_kind("nowhere/at/all") != DataSourceKind.SUPPORTED


def test_open_source_synthetic_seed_wins() -> None:
    source = open_source("synthetic:5", 8, 1, seed=0)
    assert isinstance(source, SyntheticShapes)
    assert source.seed == 5
    assert open_source("synthetic", 8, 1, seed=3).seed == 3


def test_open_source_errors(tmp_path: Path) -> None:
    with pytest.raises(DataNotFoundError):
        open_source(str(tmp_path / "missing"), 8, 1)
    with pytest.raises(DataError, match="synthetic seed"):
        open_source("synthetic:x", 8, 1)
    path = tmp_path / "file.txt"
    path.write_text("")
    with pytest.raises(DataError, match="Unsupported"):
        open_source(str(path), 8, 1)


def test_synthetic_images_are_deterministic() -> None:
    a, label_a = synthetic_image(1, 7, 16, 3)
    b, label_b = synthetic_image(1, 7, 16, 3)
    assert np.array_equal(a, b)
    assert label_a == label_b
    c, _ = synthetic_image(2, 7, 16, 3)
    assert not np.array_equal(a, c)


def test_synthetic_source_shapes_and_range() -> None:
    source = SyntheticShapes(16, 3, seed=0)
    batch = source.batch(2, 5)
    assert len(batch) == 5
    for sample in batch:
        assert sample.image.shape == (16, 16, 3)
        assert 0.0 <= sample.image.min() and sample.image.max() <= 1.0
        assert sample.label in range(len(ShapeKind))
    assert source.num_classes == 4
    assert source.describe() == "synthetic:0"


def test_probe_batch_is_held_out() -> None:
    source = SyntheticShapes(16, 1, seed=0)
    probe = source.probe_batch(3)
    assert all(
        np.array_equal(a.image, b.image) for a, b in zip(probe, source.probe_batch(3))
    )
    assert not np.array_equal(probe[0].image, source.batch(0, 1)[0].image)


def test_netpbm_encode_decode_known_bytes() -> None:
    image = np.array([[0.0, 1.0], [0.5, 0.2]])
    raw = encode_netpbm(image)
    assert raw.startswith(b"P5\n2 2\n255\n")
    assert raw[-4:] == bytes([0, 255, 128, 51])
    decoded = decode_netpbm(raw)
    assert decoded.shape == (2, 2, 1)
    np.testing.assert_allclose(decoded[:, :, 0], [[0.0, 1.0], [128 / 255, 51 / 255]])


def test_netpbm_header_comments_and_maxval() -> None:
    raw = b"P6\n# made by hand\n1 1\n15\n" + bytes([15, 0, 5])
    np.testing.assert_allclose(decode_netpbm(raw)[0, 0], [1.0, 0.0, 1 / 3])


@pytest.mark.parametrize(
    "raw,message",
    [
        (b"P2\n1 1\n255\n0", "P5/P6"),
        (b"P5\n1 1\n1000\n\x00", "maxval"),
        (b"P5\n2 2\n255\n\x00", "pixel bytes"),
        (b"P5\n2", "header"),
    ],
)
def test_netpbm_rejects_malformed(raw: bytes, message: str) -> None:
    with pytest.raises(DataError, match=message):
        decode_netpbm(raw)


def _export(root: Path, channels: int, count: int = 6, size: int = 8) -> None:
    suffix = ".pgm" if channels == 1 else ".ppm"
    for index in range(count):
        image, label = synthetic_image(0, index, size, channels)
        class_dir = root / ShapeKind(label).name.lower()
        class_dir.mkdir(parents=True, exist_ok=True)
        write_netpbm(class_dir / f"{index:06d}{suffix}", image)


def test_directory_source_labels_and_batches(tmp_path: Path) -> None:
    _export(tmp_path, channels=3)
    source = open_source(str(tmp_path), 8, 3, seed=0)
    assert isinstance(source, NetpbmDirectory)
    assert source.class_names == sorted(p.name for p in tmp_path.iterdir())
    assert source.num_classes == len(source.class_names)
    first = source.batch(0, 4)
    again = open_source(str(tmp_path), 8, 3, seed=0).batch(0, 4)
    assert [s.label for s in first] == [s.label for s in again]
    # six images, so step 1 of size 4 crosses into the second epoch
    assert len(source.batch(1, 4)) == 4


def test_directory_source_expands_grey_images(tmp_path: Path) -> None:
    _export(tmp_path, channels=1)
    sample = NetpbmDirectory(tmp_path, 8, 3, seed=0).probe_batch(1)[0]
    assert sample.image.shape == (8, 8, 3)
    assert np.array_equal(sample.image[:, :, 0], sample.image[:, :, 2])


def test_directory_source_checks_geometry(tmp_path: Path) -> None:
    _export(tmp_path, channels=3, size=16)
    with pytest.raises(DataError, match="expected"):
        NetpbmDirectory(tmp_path, 8, 3, seed=0).probe_batch(1)
    with pytest.raises(DataError, match="channel"):
        NetpbmDirectory(tmp_path, 16, 1, seed=0).probe_batch(1)


def test_empty_directory(tmp_path: Path) -> None:
    with pytest.raises(DataError, match="No"):
        NetpbmDirectory(tmp_path, 8, 3, seed=0)
