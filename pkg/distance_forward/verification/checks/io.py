"""
Round-trip checks for checkpoints and dataset formats
"""
import tempfile
from pathlib import Path

import numpy as np

from distance_forward.config import DataConfig, StrategyConfig, StrategyKind
from distance_forward.core.layers import LayerKind
from distance_forward.data.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from distance_forward.data.cifar import load_cifar10_binary, write_cifar10_binary
from distance_forward.data.idx import MNIST_FILES, load_idx, write_idx
from distance_forward.data.loaders import load_dataset, load_normalized
from distance_forward.data.normalize import NormalizationStats, compute_stats
from distance_forward.exceptions import ConfigurationError
from distance_forward.evaluation.decode import goodness_table
from distance_forward.training.feedback import FeedbackMatrices
from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata
from distance_forward.verification.toy import toy_mlp


class CheckpointRoundTripCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="checkpoint_round_trip",
            module="data-io",
            op="load_checkpoint",
            description="Saved tensors reload bitwise and decode to the same goodness table",
            category=CheckCategory.IO,
        )

    def run(self, rng):
        model, emb = toy_mlp(rng)
        model, emb = model.astype(np.float32), emb.astype(np.float32)
        for layer in model.layers:
            if layer.kind == LayerKind.BATCHNORM:
                layer.running.mean[...] = rng.random(layer.running.mean.shape)
                layer.running.var[...] = rng.random(layer.running.var.shape) + 0.5
        feedback = FeedbackMatrices(model, group_size=2, seed=int(rng.integers(1 << 16)))
        stats = NormalizationStats(mean=[0.25], std=[0.5])
        config = {"train.strategy.kind": StrategyKind.DFR.value,
                  "train.strategy.group_size": StrategyConfig(kind=StrategyKind.DFR).group_size}

        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / "model.dfck",
                                   Checkpoint(model=model, emb=emb, feedback=feedback, stats=stats, config=config))
            loaded = load_checkpoint(path)

        for (name, a), (_, b) in zip(model.named_params(), loaded.model.named_params()):
            self.require(np.array_equal(a.value, b.value), f"tensor '{name}' changed on reload")
        self.require(np.array_equal(emb.table.value, loaded.emb.table.value), "embedding changed on reload")
        for key, mat in feedback.items():
            self.require(np.array_equal(mat, loaded.feedback.get(*key)), f"feedback {key} changed on reload")
        self.require(loaded.stats == stats and loaded.config == config, "metadata changed on reload")

        images = rng.random((3,) + emb.image_shape).astype(np.float32)
        before = goodness_table(model, emb, images)
        after = goodness_table(loaded.model, loaded.emb, images)
        self.require(np.array_equal(before, after), "reloaded model decodes differently")
        return f"{len(model.named_params())} parameter tensors"


class DatasetFormatRoundTripCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="dataset_round_trip",
            module="data-io",
            op="load_idx",
            description="IDX and CIFAR-10 binary files written here load back to the same pixels and labels",
            category=CheckCategory.IO,
        )

    def run(self, rng):
        pixels = rng.integers(0, 256, size=(6, 5, 4), dtype=np.uint8)
        labels = rng.integers(0, 10, size=6, dtype=np.uint8)
        cifar_pixels = rng.integers(0, 256, size=(4, 3, 32, 32), dtype=np.uint8)
        cifar_labels = rng.integers(0, 10, size=4, dtype=np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            write_idx(tmp / "images.idx", pixels)
            write_idx(tmp / "labels.idx", labels)
            mnist = load_idx(tmp / "images.idx", tmp / "labels.idx", "train")
            write_cifar10_binary(tmp / "batch.bin", cifar_pixels, cifar_labels)
            cifar = load_cifar10_binary(tmp / "batch.bin")

        self.require(np.array_equal(np.rint(mnist.images[:, 0] * 255).astype(np.uint8), pixels), "IDX pixels differ")
        self.require(np.array_equal(mnist.labels, labels), "IDX labels differ")
        self.require(np.array_equal(np.rint(cifar.images * 255).astype(np.uint8), cifar_pixels), "CIFAR pixels differ")
        self.require(np.array_equal(cifar.labels, cifar_labels), "CIFAR labels differ")
        return "idx and cifar-10 binary"


class TrainOnlyStatisticsCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="train_only_normalization",
            module="data-io",
            op="load_normalized",
            description="Normalization statistics come from the train split and are reused unchanged for test",
            category=CheckCategory.IO,
        )

    def run(self, rng):
        config = DataConfig(dataset="mnist", subdir="mnist")
        with tempfile.TemporaryDirectory() as tmp:
            directory = Path(tmp) / "mnist"
            directory.mkdir()
            # the test split is much brighter than train
            for split, low, high, n in (("train", 0, 100, 12), ("test", 150, 256, 8)):
                images_name, labels_name = MNIST_FILES[split]
                write_idx(directory / images_name, rng.integers(low, high, size=(n, 4, 4), dtype=np.uint8))
                write_idx(directory / labels_name, rng.integers(0, 10, size=n, dtype=np.uint8))
            train_raw = load_dataset(config, Path(tmp), "train")
            test_raw = load_dataset(config, Path(tmp), "test")
            _, test, stats = load_normalized(config, Path(tmp))

        self.require(stats == compute_stats(train_raw), "statistics differ from the train split's")
        mean, std = stats.arrays()
        expected = ((test_raw.images - mean) / std).astype(np.float32)
        self.require(np.array_equal(test.images, expected), "test split was not normalized with train statistics")
        self.require(float(test.images.mean()) > 1.0, "test split looks normalized with its own statistics")
        try:
            compute_stats(test_raw)
        except ConfigurationError:
            return f"train mean {stats.mean[0]:.3f}, std {stats.std[0]:.3f}"
        self.fail("statistics were computed from a test split")
