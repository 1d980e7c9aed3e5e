"""
Generic importer for datasets without a native parser (SVHN, ImageNette, ...)

Layout: <directory>/<split>/images.npy and <directory>/<split>/labels.npy.
Images are (N, C, H, W) or (N, H, W), either uint8 or floats in [0, 1].
"""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from distance_forward.data.dataset import Dataset
from distance_forward.exceptions import DatasetFormatError

logger = logging.getLogger(__name__)


def load_raw_directory(directory: Union[str, Path], split: str, num_classes: Optional[int] = None) -> Dataset:
    base = Path(directory) / split
    images_path, labels_path = base / "images.npy", base / "labels.npy"
    for path in (images_path, labels_path):
        if not path.exists():
            raise FileNotFoundError(f"{path} not found")

    images = np.load(images_path, allow_pickle=False)
    labels = np.load(labels_path, allow_pickle=False)
    if images.ndim == 3:
        images = images[:, None]
    if images.ndim != 4:
        raise DatasetFormatError(f"{images_path}: expected (N, C, H, W) or (N, H, W), got {images.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise DatasetFormatError(f"{labels_path}: labels must be integers, got {labels.dtype}")

    if images.dtype == np.uint8:
        images = images.astype(np.float32) / np.float32(255.0)
    else:
        images = images.astype(np.float32)
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise DatasetFormatError(f"{images_path}: float pixels must lie in [0, 1]")

    k = num_classes if num_classes is not None else int(labels.max()) + 1
    dataset = Dataset(images=images, labels=labels.astype(np.int64), split=split, num_classes=k)
    logger.info(f"Loaded {len(dataset)} {split} samples from {base}")
    return dataset
