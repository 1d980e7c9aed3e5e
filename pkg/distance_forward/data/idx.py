"""
IDX reader/writer (MNIST and Fashion-MNIST)
"""
import gzip
import logging
from pathlib import Path
from typing import Union

import numpy as np

from distance_forward.data.dataset import Dataset
from distance_forward.exceptions import DatasetFormatError

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
UBYTE_TYPE = 0x08
GZIP_SIGNATURE = b"\x1f\x8b"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

PathLike = Union[str, Path]


def _read_bytes(path: PathLike) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == GZIP_SIGNATURE:
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    """
    Parse an unsigned-byte IDX buffer.

    Header: two zero bytes, type byte (0x08), ndim byte, then ndim
    big-endian uint32 sizes, then the data.
    """
    if len(raw) < 4:
        raise DatasetFormatError(f"{source}: truncated header at byte offset {len(raw)}, expected 4 bytes")
    if raw[0] != 0 or raw[1] != 0 or raw[2] != UBYTE_TYPE:
        magic = int.from_bytes(raw[:4], "big")
        raise DatasetFormatError(f"{source}: bad magic 0x{magic:08x} at byte offset 0")
    ndim = raw[3]
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise DatasetFormatError(
            f"{source}: truncated dimension header at byte offset {len(raw)}, expected {header_end} bytes"
        )
    dims = tuple(int(d) for d in np.frombuffer(raw, dtype=">u4", count=ndim, offset=4))
    expected = header_end + int(np.prod(dims, dtype=np.int64))
    if len(raw) < expected:
        raise DatasetFormatError(
            f"{source}: truncated data at byte offset {len(raw)}, expected {expected} bytes for dims {dims}"
        )
    if len(raw) > expected:
        logger.warning(f"{source}: {len(raw) - expected} trailing bytes after byte offset {expected} ignored")
    return np.frombuffer(raw, dtype=np.uint8, count=expected - header_end, offset=header_end).reshape(dims)


def read_idx(path: PathLike) -> np.ndarray:
    """Read an IDX file (optionally gzip-compressed) into a uint8 array"""
    return parse_idx(_read_bytes(path), str(path))


def write_idx(path: PathLike, array: np.ndarray) -> None:
    """Write a uint8 array as an uncompressed IDX file"""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = bytes([0, 0, UBYTE_TYPE, array.ndim]) + np.asarray(array.shape, dtype=">u4").tobytes()
    Path(path).write_bytes(header + array.tobytes())


def load_idx(images_path: PathLike, labels_path: PathLike, split: str, num_classes: int = 10) -> Dataset:
    """
    Load an images / labels IDX pair. Pixels are scaled by 1/255 into [0, 1]
    and given a channel axis.
    """
    images_raw = _read_bytes(images_path)
    labels_raw = _read_bytes(labels_path)
    images = parse_idx(images_raw, str(images_path))
    labels = parse_idx(labels_raw, str(labels_path))
    if int.from_bytes(images_raw[:4], "big") != IMAGES_MAGIC:
        raise DatasetFormatError(
            f"{images_path}: bad magic 0x{int.from_bytes(images_raw[:4], 'big'):08x} at byte offset 0, "
            f"expected 0x{IMAGES_MAGIC:08x}"
        )
    if int.from_bytes(labels_raw[:4], "big") != LABELS_MAGIC:
        raise DatasetFormatError(
            f"{labels_path}: bad magic 0x{int.from_bytes(labels_raw[:4], 'big'):08x} at byte offset 0, "
            f"expected 0x{LABELS_MAGIC:08x}"
        )
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(f"{images_path}: {images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes))
        raise DatasetFormatError(
            f"{labels_path}: label {labels[bad]} >= {num_classes} at byte offset {8 + bad}"
        )
    scaled = (images.astype(np.float32) / np.float32(255.0))[:, None]
    return Dataset(images=scaled, labels=labels.astype(np.int64), split=split, num_classes=num_classes)


def _find(directory: Path, name: str) -> Path:
    for candidate in (directory / name, directory / f"{name}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{name}(.gz) not found in {directory}")


def load_mnist(directory: PathLike, split: str) -> Dataset:
    """Load an MNIST-layout directory (also Fashion-MNIST) by the standard file names"""
    if split not in MNIST_FILES:
        raise ValueError(f"split must be 'train' or 'test', got '{split}'")
    directory = Path(directory)
    images_name, labels_name = MNIST_FILES[split]
    dataset = load_idx(_find(directory, images_name), _find(directory, labels_name), split)
    logger.info(f"Loaded {len(dataset)} {split} samples from {directory}")
    return dataset
