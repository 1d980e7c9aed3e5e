"""
Label encodings: a learnable single-channel plane per class, or the legacy
one-hot pixel replacement.
"""

import logging
from typing import List, Sequence

import numpy as np

from distance_forward.config import LabelMode
from distance_forward.core.params import DEFAULT_DTYPE, Param
from distance_forward.exceptions import DimensionError, LabelRangeError

logger = logging.getLogger(__name__)

EMBEDDING_INIT_BOUND = 0.5


class LabelEmbedding:
    """
    Encodes (image, label) pairs into network inputs.

    learnable_channel: appends table[label], a plane of one image-channel size,
    as an extra channel. pixel_replace: overwrites the first K flattened pixels
    with the one-hot label.
    """

    def __init__(
        self,
        num_classes: int,
        image_shape: Sequence[int],
        mode: LabelMode = LabelMode.LEARNABLE_CHANNEL,
        rng: np.random.Generator = None,
        dtype=DEFAULT_DTYPE,
    ):
        if len(image_shape) != 3:
            raise DimensionError(f"image_shape must be (C, H, W), got {tuple(image_shape)}")
        self.num_classes = int(num_classes)
        self.image_shape = tuple(int(d) for d in image_shape)
        self.mode = LabelMode(mode)
        self.table = None
        _, h, w = self.image_shape
        if self.mode == LabelMode.LEARNABLE_CHANNEL:
            rng = rng if rng is not None else np.random.default_rng(0)
            init = rng.uniform(-EMBEDDING_INIT_BOUND, EMBEDDING_INIT_BOUND, size=(self.num_classes, h, w))
            self.table = Param("embedding", init.astype(dtype))
        elif self.num_classes >= int(np.prod(self.image_shape)):
            raise DimensionError(
                f"pixel_replace needs more than {self.num_classes} pixels, image has {self.image_shape}"
            )

    @property
    def params(self) -> List[Param]:
        return [self.table] if self.table is not None else []

    @property
    def output_shape(self):
        c, h, w = self.image_shape
        if self.mode == LabelMode.LEARNABLE_CHANNEL:
            return (c + 1, h, w)
        return (c, h, w)

    def check_labels(self, labels: np.ndarray) -> None:
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise LabelRangeError(
                f"labels must lie in [0, {self.num_classes}), got range [{labels.min()}, {labels.max()}]"
            )

    def encode(self, images: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """
        Args:
            images: (B, C, H, W)
            labels: (B,) integer labels

        Returns:
            (B, C', H, W) network inputs
        """
        labels = np.asarray(labels, dtype=np.int64)
        if images.ndim != 4 or images.shape[1:] != self.image_shape or images.shape[0] != labels.shape[0]:
            raise DimensionError(
                f"expected images (B, {self.image_shape}) with B={labels.shape[0]}, got {images.shape}"
            )
        self.check_labels(labels)

        if self.mode == LabelMode.LEARNABLE_CHANNEL:
            planes = self.table.value[labels][:, None].astype(images.dtype, copy=False)
            return np.concatenate([images, planes], axis=1)

        b = images.shape[0]
        flat = images.reshape(b, -1).copy()
        flat[:, :self.num_classes] = 0.0
        flat[np.arange(b), labels] = 1.0
        return flat.reshape(images.shape)

    def accumulate_grad(self, input_grad: np.ndarray, labels: np.ndarray) -> None:
        """Route the gradient w.r.t. the encoded input back into the label planes"""
        if self.table is None:
            return
        np.add.at(self.table.grad, np.asarray(labels, dtype=np.int64), input_grad[:, -1])

    def astype(self, dtype) -> "LabelEmbedding":
        clone = object.__new__(LabelEmbedding)
        clone.__dict__.update(self.__dict__)
        clone.table = self.table.astype(dtype) if self.table is not None else None
        return clone


def make_positive(x: np.ndarray, label: int, emb: LabelEmbedding) -> np.ndarray:
    """Encode a single (C, H, W) image with its label"""
    return emb.encode(x[None], np.array([label]))[0]
