"""
In-memory image classification dataset
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from distance_forward.exceptions import DimensionError, LabelRangeError


@dataclass(frozen=True)
class Dataset:
    """
    images: (N, C, H, W) float32, in [0, 1] until normalized.
    labels: (N,) int64 in [0, num_classes).
    """
    images: np.ndarray
    labels: np.ndarray
    split: str
    num_classes: int
    normalized: bool = False

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DimensionError(f"images must be (N, C, H, W), got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DimensionError(
                f"labels shape {self.labels.shape} does not match {self.images.shape[0]} images"
            )
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got '{self.split}'")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelRangeError(
                f"labels must lie in [0, {self.num_classes}), got [{self.labels.min()}, {self.labels.max()}]"
            )
        self.images.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, limit: Optional[int] = None, indices: Optional[np.ndarray] = None) -> "Dataset":
        """First `limit` samples, or the given indices"""
        if indices is None:
            if limit is None or limit >= len(self):
                return self
            indices = np.arange(limit)
        return replace(self, images=self.images[indices].copy(), labels=self.labels[indices].copy())

    def with_images(self, images: np.ndarray, normalized: Optional[bool] = None) -> "Dataset":
        return replace(
            self,
            images=np.ascontiguousarray(images, dtype=np.float32),
            labels=self.labels.copy(),
            normalized=self.normalized if normalized is None else normalized,
        )
