"""
Tests for dataset parsers, normalization, checkpoints, metric CSVs and run manifests
"""
import gzip
import hashlib
import json

import numpy as np
import pytest

from distance_forward.config import DataConfig
from distance_forward.core.layers import LayerKind
from distance_forward.data.checkpoint import Checkpoint, checkpoint_bytes, load_checkpoint, save_checkpoint
from distance_forward.data.cifar import RECORD_BYTES, load_cifar10, load_cifar10_binary, parse_cifar10, write_cifar10_binary
from distance_forward.data.dataset import Dataset
from distance_forward.data.idx import MNIST_FILES, load_idx, load_mnist, parse_idx, read_idx, write_idx
from distance_forward.data.loaders import dataset_directory, load_dataset, load_normalized
from distance_forward.data.manifest import RunManifest, blob_hash, file_blob_hash, read_manifest, write_manifest
from distance_forward.data.metrics import read_metrics, write_metrics
from distance_forward.data.normalize import NormalizationStats, compute_stats, normalize, normalize_images
from distance_forward.data.raw import load_raw_directory
from distance_forward.data.transforms import random_crop_flip
from distance_forward.exceptions import CheckpointVersionError, ConfigurationError, DatasetFormatError, LabelRangeError
from distance_forward.evaluation.decode import goodness_table
from distance_forward.training.feedback import FeedbackMatrices

from conftest import make_dataset, write_mnist_dir


class TestIdx:
    def test_parse(self):
        raw = bytes([0, 0, 8, 2, 0, 0, 0, 2, 0, 0, 0, 3]) + bytes(range(6))
        np.testing.assert_array_equal(parse_idx(raw), np.arange(6).reshape(2, 3))

    def test_bad_magic(self):
        with pytest.raises(DatasetFormatError, match="bad magic 0x00000d01 at byte offset 0"):
            parse_idx(bytes([0, 0, 0x0D, 1, 0, 0, 0, 0]))

    def test_truncated_data(self):
        raw = bytes([0, 0, 8, 1, 0, 0, 0, 5, 1, 2])
        with pytest.raises(DatasetFormatError, match="byte offset 10.*expected 13"):
            parse_idx(raw)

    def test_truncated_header(self):
        with pytest.raises(DatasetFormatError, match="truncated"):
            parse_idx(bytes([0, 0, 8, 3, 0, 0]))

    def test_gzip(self, tmp_path, rng):
        array = rng.integers(0, 256, size=(3, 4, 4)).astype(np.uint8)
        write_idx(tmp_path / "plain", array)
        (tmp_path / "packed").write_bytes(gzip.compress((tmp_path / "plain").read_bytes()))
        np.testing.assert_array_equal(read_idx(tmp_path / "packed"), array)

    def test_load_pair_scales_pixels(self, tmp_path):
        write_idx(tmp_path / "images", np.array([[[0, 255], [51, 102]]], dtype=np.uint8))
        write_idx(tmp_path / "labels", np.array([7], dtype=np.uint8))
        dataset = load_idx(tmp_path / "images", tmp_path / "labels", "train")
        assert dataset.images.shape == (1, 1, 2, 2)
        np.testing.assert_allclose(dataset.images[0, 0], [[0.0, 1.0], [0.2, 0.4]], rtol=1e-6)
        assert dataset.labels.tolist() == [7]

    def test_swapped_files(self, tmp_path):
        write_idx(tmp_path / "images", np.zeros((2, 3, 3), dtype=np.uint8))
        write_idx(tmp_path / "labels", np.zeros(2, dtype=np.uint8))
        with pytest.raises(DatasetFormatError, match="expected 0x00000803"):
            load_idx(tmp_path / "labels", tmp_path / "images", "train")

    def test_label_out_of_range_names_offset(self, tmp_path):
        write_idx(tmp_path / "images", np.zeros((3, 2, 2), dtype=np.uint8))
        write_idx(tmp_path / "labels", np.array([1, 12, 3], dtype=np.uint8))
        with pytest.raises(DatasetFormatError, match="byte offset 9"):
            load_idx(tmp_path / "images", tmp_path / "labels", "train")

    def test_mnist_directory(self, tmp_path, rng):
        write_mnist_dir(tmp_path, rng, n_train=6, n_test=4, size=5)
        assert len(load_mnist(tmp_path, "train")) == 6
        test = load_mnist(tmp_path, "test")
        assert test.split == "test" and test.image_shape == (1, 5, 5)
        (tmp_path / MNIST_FILES["test"][1]).unlink()
        with pytest.raises(FileNotFoundError):
            load_mnist(tmp_path, "test")


class TestCifar:
    def test_round_trip(self, tmp_path, rng):
        images = rng.integers(0, 256, size=(3, 3, 32, 32)).astype(np.uint8)
        write_cifar10_binary(tmp_path / "batch.bin", images, [0, 9, 4])
        dataset = load_cifar10_binary(tmp_path / "batch.bin")
        assert dataset.labels.tolist() == [0, 9, 4]
        np.testing.assert_allclose(dataset.images * 255.0, images, atol=1e-4)

    def test_channel_planes(self):
        record = np.zeros(RECORD_BYTES, dtype=np.uint8)
        record[0] = 1
        record[1 + 1024] = 200
        images, labels = parse_cifar10(record.tobytes())
        assert labels.tolist() == [1]
        assert images[0, 1, 0, 0] == 200 and images[0, 0, 0, 0] == 0

    def test_truncated_record(self):
        with pytest.raises(DatasetFormatError, match=f"truncated record 1 at byte offset {RECORD_BYTES}"):
            parse_cifar10(bytes(RECORD_BYTES + 10))

    def test_label_byte_out_of_range(self):
        raw = bytearray(2 * RECORD_BYTES)
        raw[RECORD_BYTES] = 10
        with pytest.raises(DatasetFormatError, match=f"byte offset {RECORD_BYTES}"):
            parse_cifar10(bytes(raw))

    def test_missing_batch(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="test_batch.bin"):
            load_cifar10(tmp_path, "test")


class TestRaw:
    def test_uint8_without_channel_axis(self, tmp_path, rng):
        split = tmp_path / "train"
        split.mkdir()
        np.save(split / "images.npy", rng.integers(0, 256, size=(5, 6, 6)).astype(np.uint8))
        np.save(split / "labels.npy", np.array([0, 1, 2, 1, 0]))
        dataset = load_raw_directory(tmp_path, "train")
        assert dataset.image_shape == (1, 6, 6)
        assert dataset.num_classes == 3
        assert dataset.images.max() <= 1.0

    def test_float_pixels_out_of_range(self, tmp_path):
        split = tmp_path / "test"
        split.mkdir()
        np.save(split / "images.npy", np.full((2, 1, 3, 3), 2.0))
        np.save(split / "labels.npy", np.array([0, 1]))
        with pytest.raises(DatasetFormatError, match=r"\[0, 1\]"):
            load_raw_directory(tmp_path, "test", num_classes=2)

    def test_label_out_of_range(self, tmp_path):
        split = tmp_path / "test"
        split.mkdir()
        np.save(split / "images.npy", np.zeros((2, 1, 3, 3), dtype=np.uint8))
        np.save(split / "labels.npy", np.array([0, 5]))
        with pytest.raises(LabelRangeError):
            load_raw_directory(tmp_path, "test", num_classes=3)


class TestLoaders:
    def test_directory_defaults(self, tmp_path):
        assert dataset_directory(DataConfig(dataset="fmnist"), tmp_path) == tmp_path / "fashion-mnist"
        assert dataset_directory(DataConfig(dataset="cifar10", subdir="c10"), tmp_path) == tmp_path / "c10"

    def test_train_limit(self, dataset_root):
        dataset = load_dataset(DataConfig(train_limit=7), dataset_root, "train")
        assert len(dataset) == 7
        assert len(load_dataset(DataConfig(train_limit=7), dataset_root, "test")) == 20

    def test_normalized_pair(self, dataset_root):
        train, test, stats = load_normalized(DataConfig(), dataset_root)
        assert train.normalized and test.normalized
        assert abs(float(train.images.mean())) < 1e-4
        assert float(train.images.std()) == pytest.approx(1.0, abs=1e-3)
        assert len(stats.mean) == 1


class TestNormalize:
    def test_stats_from_train_only(self, rng):
        with pytest.raises(ConfigurationError, match="train split"):
            compute_stats(make_dataset(rng, split="test"))

    def test_per_channel(self, rng):
        images = np.stack([rng.random((20, 3, 3)) * 2, rng.random((20, 3, 3)) + 5], axis=1).astype(np.float32)
        dataset = Dataset(images=images, labels=np.zeros(20, dtype=np.int64), split="train", num_classes=2)
        normalized = normalize(dataset, compute_stats(dataset))
        np.testing.assert_allclose(normalized.images.mean(axis=(0, 2, 3)), [0, 0], atol=1e-5)
        np.testing.assert_allclose(normalized.images.std(axis=(0, 2, 3)), [1, 1], atol=1e-4)

    def test_twice_rejected(self, tiny_dataset):
        stats = compute_stats(tiny_dataset)
        with pytest.raises(ConfigurationError, match="already normalized"):
            normalize(normalize(tiny_dataset, stats), stats)

    def test_constant_channel(self):
        dataset = Dataset(images=np.full((4, 1, 2, 2), 0.3, dtype=np.float32), labels=np.zeros(4, dtype=np.int64),
                          split="train", num_classes=1)
        assert np.all(np.isfinite(normalize(dataset, compute_stats(dataset)).images))


class TestTransforms:
    def test_shape_and_content(self, rng):
        images = rng.random((6, 3, 8, 8)).astype(np.float32)
        out = random_crop_flip(images, rng)
        assert out.shape == images.shape and out.dtype == images.dtype

    def test_zero_padding_is_identity_up_to_flip(self, rng):
        images = rng.random((4, 1, 5, 5))
        out = random_crop_flip(images, rng, padding=0)
        for a, b in zip(images, out):
            assert np.array_equal(a, b) or np.array_equal(a[:, :, ::-1], b)

    def test_fill_is_per_channel(self, rng):
        images = np.ones((8, 2, 4, 4))
        out = random_crop_flip(images, rng, padding=2, fill=[-1.0, -3.0])
        assert set(np.unique(out[:, 0])) <= {1.0, -1.0}
        assert set(np.unique(out[:, 1])) <= {1.0, -3.0}
        assert (out[:, 0] == -1.0).any()
        np.testing.assert_array_equal(out[:, 0] == -1.0, out[:, 1] == -3.0)

    def test_fill_length_must_match_channels(self, rng):
        with pytest.raises(ValueError, match="2 channels"):
            random_crop_flip(np.ones((1, 2, 4, 4)), rng, fill=[0.0])

    def test_black_is_normalized_zero(self):
        stats = NormalizationStats(mean=[0.5, 0.25], std=[0.25, 0.5])
        assert stats.black() == [-2.0, -0.5]
        np.testing.assert_allclose(normalize_images(np.zeros((1, 2, 1, 1)), stats).ravel(), stats.black())


class TestCheckpoint:
    def _checkpoint(self, mlp):
        model, emb = mlp
        return Checkpoint(
            model=model.astype(np.float32),
            emb=emb.astype(np.float32),
            feedback=FeedbackMatrices(model, 2).astype(np.float32),
            stats=NormalizationStats(mean=[0.1], std=[0.3]),
            config={"train.seed": 3},
            rng_state={"seed": 3},
        )

    def test_round_trip(self, mlp, tmp_path, rng):
        ckpt = self._checkpoint(mlp)
        for layer in ckpt.model.layers:
            if layer.kind == LayerKind.BATCHNORM:
                layer.running.mean[...] = rng.random(layer.running.mean.shape)
        path = save_checkpoint(tmp_path / "run" / "model.dfck", ckpt)
        loaded = load_checkpoint(path)

        for (name, a), (_, b) in zip(ckpt.model.named_params(), loaded.model.named_params()):
            np.testing.assert_array_equal(a.value, b.value, err_msg=name)
        np.testing.assert_array_equal(ckpt.emb.table.value, loaded.emb.table.value)
        for (key, a), (_, b) in zip(ckpt.feedback.items(), loaded.feedback.items()):
            np.testing.assert_array_equal(a, b, err_msg=str(key))
        assert loaded.stats == ckpt.stats
        assert loaded.config == {"train.seed": 3}
        images = rng.random((3,) + ckpt.emb.image_shape).astype(np.float32)
        np.testing.assert_array_equal(goodness_table(ckpt.model, ckpt.emb, images),
                                      goodness_table(loaded.model, loaded.emb, images))

    def test_bytes_are_deterministic(self, mlp):
        ckpt = self._checkpoint(mlp)
        assert checkpoint_bytes(ckpt) == checkpoint_bytes(ckpt)

    def test_version_mismatch(self, mlp, tmp_path):
        raw = checkpoint_bytes(self._checkpoint(mlp))
        path = tmp_path / "old.dfck"
        path.write_bytes(raw.replace(b"DFCKPT 1\n", b"DFCKPT 7\n", 1))
        with pytest.raises(CheckpointVersionError, match="version 7"):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"hello\nworld\n")
        with pytest.raises(DatasetFormatError, match="bad magic"):
            load_checkpoint(path)

    def test_truncated_tensor(self, mlp, tmp_path):
        path = tmp_path / "short.dfck"
        path.write_bytes(checkpoint_bytes(self._checkpoint(mlp))[:-8])
        with pytest.raises(DatasetFormatError, match="truncated"):
            load_checkpoint(path)

    @pytest.mark.parametrize("raw, message", [
        (b"DFCKPT 1\nabc\n{}", "bad header length"),
        (b"DFCKPT 1\n40\n{}", "truncated"),
        (b"DFCKPT 1\n5\n{\"a\":", "unreadable JSON header"),
        (b"DFCKPT 1\n2\n\xff\xfe", "unreadable JSON header"),
        (b"DFCKPT 1\n2\n[]", "not a JSON object"),
        (b"DFCKPT 1\n2\n{}", "lacks"),
    ])
    def test_corrupt_header(self, raw, message, tmp_path):
        path = tmp_path / "bad.dfck"
        path.write_bytes(raw)
        with pytest.raises(DatasetFormatError, match=message):
            load_checkpoint(path)


class TestMetrics:
    def test_column_order_is_first_seen(self, tmp_path):
        path = write_metrics(tmp_path / "m.csv", [{"b": 1, "a": 2}, {"a": 3, "c": 4}])
        assert path.read_text().splitlines()[0] == "b,a,c"
        frame = read_metrics(path)
        assert frame["a"].tolist() == [2, 3]
        assert frame["c"].isna().tolist() == [True, False]

    def test_explicit_columns_and_models(self, tmp_path):
        rows = [NormalizationStats(mean=[0.5], std=[1.0])]
        path = write_metrics(tmp_path / "s.csv", rows, columns=["std", "mean"])
        assert path.read_text().splitlines()[0] == "std,mean"


class TestManifest:
    def test_blob_hash_matches_git(self):
        assert blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
        assert blob_hash(b"abc") == hashlib.sha1(b"blob 3\0abc").hexdigest()

    def test_round_trip_with_artifact_hashes(self, tmp_path):
        (tmp_path / "metrics.csv").write_text("epoch\n1\n")
        manifest = RunManifest(command="train", seed=4, config={"train.seed": 4},
                               artifacts={"metrics.csv": "", "missing.csv": ""})
        path = write_manifest(tmp_path, manifest)
        loaded = read_manifest(path)
        assert loaded.artifacts["metrics.csv"] == file_blob_hash(tmp_path / "metrics.csv")
        assert loaded.artifacts["missing.csv"] == ""
        assert json.loads(path.read_text())["seed"] == 4
