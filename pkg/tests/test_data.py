"""Dataset parsing, preprocessing, and per-class partitioning."""

import struct

import numpy as np
import pytest

import synthdata

from fedleak.data import (LabeledImage, Partition, load_cifar10, load_dataset,
                          load_idx_images, load_idx_labels, partition_by_class,
                          preprocess)
from fedleak.errors import DataError, DimensionError, ParseError
from fedleak.tensor import Tensor


@pytest.fixture(scope="module")
def idx_dir(tmp_path_factory):
    return synthdata.write_mnist_dir(tmp_path_factory.mktemp("idx"),
                                     train_per_class=12, test_per_class=4)


class TestIdxParsing:
    def test_image_file_roundtrip(self, idx_dir):
        images = load_idx_images(idx_dir / "train-images-idx3-ubyte")
        assert images.shape == (120, 28, 28)
        assert images.dtype == np.uint8

    def test_label_file_roundtrip(self, idx_dir):
        labels = load_idx_labels(idx_dir / "train-labels-idx1-ubyte")
        assert labels.shape == (120,)
        assert set(np.unique(labels)) == set(range(10))

    def test_zero_image_file(self, tmp_path):
        path = tmp_path / "empty-idx"
        path.write_bytes(struct.pack(">IIII", 0x803, 0, 28, 28))
        assert load_idx_images(path).shape == (0, 28, 28)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">IIII", 0x9999, 1, 28, 28) + b"\0" * 784)
        with pytest.raises(ParseError) as err:
            load_idx_images(path)
        assert err.value.offset == 0

    def test_truncated_image_payload(self, tmp_path):
        path = tmp_path / "short"
        path.write_bytes(struct.pack(">IIII", 0x803, 2, 28, 28) + b"\0" * 800)
        with pytest.raises(ParseError) as err:
            load_idx_images(path)
        assert "1568" in str(err.value) and "800" in str(err.value)

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "labels"
        path.write_bytes(struct.pack(">II", 0x801, 3) + bytes([1, 12, 3]))
        with pytest.raises(ParseError) as err:
            load_idx_labels(path)
        assert err.value.offset == 8 + 1

    def test_gzip_transparent(self, idx_dir, tmp_path):
        import gzip
        raw = (idx_dir / "t10k-labels-idx1-ubyte").read_bytes()
        gz = tmp_path / "labels.gz"
        gz.write_bytes(gzip.compress(raw))
        np.testing.assert_array_equal(
            load_idx_labels(gz), load_idx_labels(idx_dir / "t10k-labels-idx1-ubyte"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError) as err:
            load_idx_images(tmp_path / "nope-idx3-ubyte")
        assert "nope" in str(err.value)


class TestCifarParsing:
    def test_batch_roundtrip(self, tmp_path):
        root = synthdata.write_cifar_dir(tmp_path, train_per_class=2,
                                         test_per_class=1)
        records = load_cifar10([root / "test_batch.bin"])
        assert len(records) == 10
        label, pixels = records[0]
        assert 0 <= label <= 9 and pixels.shape == (3, 32, 32)

    def test_single_record(self, tmp_path):
        rng = np.random.default_rng(3)
        path = tmp_path / "one.bin"
        path.write_bytes(synthdata.make_cifar_record(7, rng))
        records = load_cifar10([path])
        assert len(records) == 1 and records[0][0] == 7

    def test_record_positions_are_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        blobs = [synthdata.make_cifar_record(c, rng) for c in (3, 1, 4)]
        path = tmp_path / "three.bin"
        path.write_bytes(b"".join(blobs))
        records = load_cifar10([path])
        for i, blob in enumerate(blobs):
            assert records[i][0] == blob[0]
            np.testing.assert_array_equal(
                records[i][1].ravel(), np.frombuffer(blob[1:], np.uint8))

    def test_bad_size(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\0" * 3072)
        with pytest.raises(ParseError):
            load_cifar10([path])

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "badlabel.bin"
        path.write_bytes(bytes([11]) + b"\0" * 3072)
        with pytest.raises(ParseError) as err:
            load_cifar10([path])
        assert err.value.offset == 0


class TestPreprocess:
    def test_byte_range_endpoints(self):
        img = np.zeros((28, 28), np.uint8)
        img[0, 0] = 255
        t = preprocess(img)
        assert t.shape == (1, 28, 28)
        assert t.view()[0, 0, 0] == 1.0
        assert t.view()[0, 27, 27] == -1.0

    def test_pure_gray_luma_exact(self):
        rgb = np.full((3, 32, 32), 128, np.uint8)
        from fedleak.data import grayscale
        assert np.all(grayscale(rgb) == 128.0)

    def test_constant_rgb_resizes_to_constant(self):
        rgb = np.full((3, 32, 32), 77, np.uint8)
        t = preprocess(rgb)
        assert t.shape == (1, 28, 28)
        v = t.view()
        assert float(v.max()) == float(v.min())

    def test_grayscale_roundtrip_is_lossless(self):
        img = np.arange(256, dtype=np.uint8).reshape(16, 16)
        full = np.zeros((28, 28), np.uint8)
        full[:16, :16] = img
        t = preprocess(full)
        recovered = np.round((t.view()[0].astype(np.float64) + 1.0) * 127.5)
        np.testing.assert_array_equal(recovered.astype(np.uint8), full)

    def test_unexpected_shape(self):
        with pytest.raises(DimensionError):
            preprocess(np.zeros((30, 30), np.uint8))


def make_dataset(per_class, classes=range(10), seed=5):
    rng = np.random.default_rng(seed)
    out = []
    for c in classes:
        for _ in range(per_class):
            pix = Tensor.from_array(rng.uniform(-1, 1, (1, 28, 28)))
            out.append(LabeledImage(pix, c))
    return out


class TestPartition:
    def test_sizes_and_ownership(self):
        data = make_dataset(20)
        parts = partition_by_class(data, 15, np.random.default_rng(0))
        assert sorted(parts) == list(range(10))
        for c, part in parts.items():
            assert part.owner_class == c and len(part) == 15
            assert all(s.label == c for s in part.samples)

    def test_disjoint(self):
        data = make_dataset(8)
        parts = partition_by_class(data, 8, np.random.default_rng(0))
        seen = set()
        for part in parts.values():
            for s in part.samples:
                assert id(s) not in seen
                seen.add(id(s))
        assert len(seen) == 80

    def test_zero_samples_per_class(self):
        parts = partition_by_class(make_dataset(3), 0, np.random.default_rng(0))
        assert len(parts) == 10
        assert all(len(p) == 0 for p in parts.values())

    def test_deterministic(self):
        data = make_dataset(10)
        a = partition_by_class(data, 6, np.random.default_rng(42))
        b = partition_by_class(data, 6, np.random.default_rng(42))
        for c in a:
            assert [id(s) for s in a[c].samples] == [id(s) for s in b[c].samples]

    def test_insufficient_class_named(self):
        data = make_dataset(5, classes=range(9)) + make_dataset(2, classes=[9])
        with pytest.raises(DataError) as err:
            partition_by_class(data, 5, np.random.default_rng(0))
        assert "class 9" in str(err.value)


class TestLoadDataset:
    def test_mnist_split(self, idx_dir):
        train, test = load_dataset("mnist", idx_dir)
        assert len(train) == 120 and len(test) == 40
        sample = train[0]
        assert sample.pixels.shape == (1, 28, 28)
        assert -1.0 <= float(sample.pixels.view().min())
        assert float(sample.pixels.view().max()) <= 1.0

    def test_nested_dataset_directory(self, tmp_path):
        synthdata.write_mnist_dir(tmp_path / "mnist", 2, 1)
        train, test = load_dataset("mnist", tmp_path)
        assert len(train) == 20 and len(test) == 10

    def test_cifar_split(self, tmp_path):
        root = synthdata.write_cifar_dir(tmp_path, 3, 2)
        train, test = load_dataset("cifar10", root)
        assert len(train) == 30 and len(test) == 20
        assert train[0].pixels.shape == (1, 28, 28)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(DataError) as err:
            load_dataset("mnist", tmp_path)
        assert "train-images" in str(err.value)

    def test_unknown_dataset(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset("imagenet", tmp_path)
