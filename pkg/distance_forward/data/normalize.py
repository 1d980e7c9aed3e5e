"""
Per-channel standardization with statistics from the training split
"""
from typing import List

import numpy as np
from pydantic import BaseModel, Field

from distance_forward.data.dataset import Dataset
from distance_forward.exceptions import ConfigurationError, DimensionError

STD_FLOOR = 1e-8


class NormalizationStats(BaseModel):
    mean: List[float] = Field(..., description="Per-channel mean")
    std: List[float] = Field(..., description="Per-channel standard deviation")

    def arrays(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(1, -1, 1, 1)
        std = np.asarray(self.std, dtype=np.float64).reshape(1, -1, 1, 1)
        return mean, std

    def black(self) -> List[float]:
        """Per-channel value a raw 0 pixel takes after normalization"""
        return [-m / s for m, s in zip(self.mean, self.std)]


def compute_stats(dataset: Dataset) -> NormalizationStats:
    """Per-channel mean / std of a training split"""
    if dataset.split != "train":
        raise ConfigurationError(f"normalization statistics must come from the train split, got '{dataset.split}'")
    images = dataset.images.astype(np.float64)
    mean = images.mean(axis=(0, 2, 3))
    std = np.maximum(images.std(axis=(0, 2, 3)), STD_FLOOR)
    return NormalizationStats(mean=mean.tolist(), std=std.tolist())


def normalize_images(images: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    mean, std = stats.arrays()
    if mean.shape[1] != images.shape[1]:
        raise DimensionError(f"stats cover {mean.shape[1]} channels, images have {images.shape[1]}")
    return ((images - mean) / std).astype(np.float32)


def normalize(dataset: Dataset, stats: NormalizationStats) -> Dataset:
    """Standardize a split with the given (training) statistics"""
    if dataset.normalized:
        raise ConfigurationError(f"{dataset.split} split is already normalized")
    return dataset.with_images(normalize_images(dataset.images, stats), normalized=True)
