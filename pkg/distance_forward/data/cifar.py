"""
CIFAR-10 binary batches
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np

from distance_forward.data.dataset import Dataset
from distance_forward.exceptions import DatasetFormatError

logger = logging.getLogger(__name__)

CHANNELS, HEIGHT, WIDTH = 3, 32, 32
RECORD_BYTES = 1 + CHANNELS * HEIGHT * WIDTH
NUM_CLASSES = 10
TRAIN_BATCHES = [f"data_batch_{i}.bin" for i in range(1, 6)]
TEST_BATCHES = ["test_batch.bin"]

PathLike = Union[str, Path]


def parse_cifar10(raw: bytes, source: str = "<bytes>"):
    """
    Records of one label byte followed by 1024 R, 1024 G and 1024 B bytes.

    Returns:
        (uint8 images (N, 3, 32, 32), int64 labels (N,))
    """
    if len(raw) % RECORD_BYTES:
        whole = len(raw) // RECORD_BYTES
        raise DatasetFormatError(
            f"{source}: truncated record {whole} at byte offset {whole * RECORD_BYTES}, "
            f"file size {len(raw)} is not a multiple of {RECORD_BYTES}"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() >= NUM_CLASSES:
        bad = int(np.argmax(labels >= NUM_CLASSES))
        raise DatasetFormatError(
            f"{source}: label byte {labels[bad]} > {NUM_CLASSES - 1} at byte offset {bad * RECORD_BYTES}"
        )
    images = records[:, 1:].reshape(-1, CHANNELS, HEIGHT, WIDTH)
    return images, labels


def load_cifar10_binary(path: PathLike, split: str = "train") -> Dataset:
    """One binary batch file as a Dataset in [0, 1]"""
    images, labels = parse_cifar10(Path(path).read_bytes(), str(path))
    return Dataset(images=images.astype(np.float32) / np.float32(255.0), labels=labels,
                   split=split, num_classes=NUM_CLASSES)


def write_cifar10_binary(path: PathLike, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 (N, 3, 32, 32) images and labels as one binary batch"""
    images = np.ascontiguousarray(images, dtype=np.uint8).reshape(-1, CHANNELS * HEIGHT * WIDTH)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    Path(path).write_bytes(np.concatenate([labels, images], axis=1).tobytes())


def load_cifar10(directory: PathLike, split: str) -> Dataset:
    """All batches of a split from the standard cifar-10-batches-bin layout"""
    directory = Path(directory)
    names = TRAIN_BATCHES if split == "train" else TEST_BATCHES
    images, labels = [], []
    for name in names:
        path = directory / name
        if not path.exists():
            raise FileNotFoundError(f"{name} not found in {directory}")
        imgs, lbls = parse_cifar10(path.read_bytes(), str(path))
        images.append(imgs)
        labels.append(lbls)
    dataset = Dataset(
        images=np.concatenate(images).astype(np.float32) / np.float32(255.0),
        labels=np.concatenate(labels),
        split=split,
        num_classes=NUM_CLASSES,
    )
    logger.info(f"Loaded {len(dataset)} {split} samples from {directory}")
    return dataset
