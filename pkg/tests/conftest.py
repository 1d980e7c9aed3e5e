"""
Shared fixtures: seeded generators, tiny models and synthetic datasets
"""
import os
from pathlib import Path

import numpy as np
import pytest

from distance_forward.config import DATASET_ROOT_ENV
from distance_forward.data.dataset import Dataset
from distance_forward.data.idx import MNIST_FILES, write_idx
from distance_forward.verification.toy import toy_batch, toy_cnn, toy_mlp


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: needs real datasets under $DF_DATASET_ROOT and long runs")


def pytest_collection_modifyitems(config, items):
    if os.environ.get(DATASET_ROOT_ENV):
        return
    skip = pytest.mark.skip(reason=f"{DATASET_ROOT_ENV} not set")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mlp(rng):
    """Three-unit 64-bit MLP and its learnable-channel embedding"""
    return toy_mlp(rng, depth=3)


@pytest.fixture
def cnn(rng):
    return toy_cnn(rng)


@pytest.fixture
def batch(mlp, rng):
    _, emb = mlp
    return toy_batch(emb, rng)


def make_dataset(rng, n=40, image_shape=(1, 4, 4), num_classes=4, split="train"):
    """Class-dependent bright patches so the task is learnable"""
    labels = rng.integers(0, num_classes, size=n)
    images = rng.random((n,) + image_shape).astype(np.float32) * 0.2
    flat = images.reshape(n, -1)
    width = flat.shape[1] // num_classes
    for i, y in enumerate(labels):
        flat[i, y * width:(y + 1) * width] += 0.8
    return Dataset(images=np.clip(images, 0.0, 1.0), labels=labels.astype(np.int64),
                   split=split, num_classes=num_classes)


@pytest.fixture
def tiny_dataset(rng):
    return make_dataset(rng)


def write_mnist_dir(directory: Path, rng, n_train=60, n_test=20, size=8):
    """A miniature MNIST-layout directory of IDX files"""
    directory.mkdir(parents=True, exist_ok=True)
    for split, n in (("train", n_train), ("test", n_test)):
        labels = rng.integers(0, 10, size=n).astype(np.uint8)
        images = rng.integers(0, 60, size=(n, size, size)).astype(np.uint8)
        for i, y in enumerate(labels):
            images[i, y % size, :] = 255
        images_name, labels_name = MNIST_FILES[split]
        write_idx(directory / images_name, images)
        write_idx(directory / labels_name, labels)
    return directory


@pytest.fixture
def dataset_root(tmp_path, rng):
    """Dataset root holding a miniature mnist/ directory"""
    root = tmp_path / "datasets"
    write_mnist_dir(root / "mnist", rng)
    return root
