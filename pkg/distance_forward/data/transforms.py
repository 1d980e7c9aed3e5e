"""
Training-time augmentation for colour datasets
"""
from typing import Optional, Sequence

import numpy as np

CROP_PADDING = 4


def random_crop_flip(images: np.ndarray, rng: np.random.Generator, padding: int = CROP_PADDING,
                     fill: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Pad by `padding`, crop back to the original size at a random offset and
    flip horizontally with probability 1/2, per image.

    `fill` is the per-channel pad value; None pads with 0. On normalized
    images pass NormalizationStats.black() so the border stays black.
    """
    n, c, h, w = images.shape
    padded = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=images.dtype)
    if fill is not None:
        fill = np.asarray(fill, dtype=images.dtype)
        if fill.shape != (c,):
            raise ValueError(f"fill has {fill.size} values for {c} channels")
        padded[...] = fill.reshape(1, c, 1, 1)
    padded[:, :, padding:padding + h, padding:padding + w] = images
    dy = rng.integers(0, 2 * padding + 1, size=n)
    dx = rng.integers(0, 2 * padding + 1, size=n)
    flip = rng.random(n) < 0.5
    out = np.empty_like(images)
    for i in range(n):
        crop = padded[i, :, dy[i]:dy[i] + h, dx[i]:dx[i] + w]
        out[i] = crop[:, :, ::-1] if flip[i] else crop
    return out
