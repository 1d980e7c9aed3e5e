"""
Positive / N-negative batch construction
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from distance_forward.exceptions import ConfigurationError
from distance_forward.samples.embedding import LabelEmbedding


@dataclass
class SampleBatch:
    """
    pos: (B, C', H, W); negs: (B, N, C', H, W).

    Negatives reuse the positive's image and differ only in the label
    encoding. neg_labels rows are pairwise distinct and never equal the true label.
    """
    pos: np.ndarray
    negs: np.ndarray
    true_labels: np.ndarray
    neg_labels: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.pos.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.negs.shape[1]

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Positives followed by negatives (row-major over (b, k)) as one forward
        batch, so batch-norm statistics cover both polarities.
        """
        b, n = self.neg_labels.shape
        x = np.concatenate([self.pos, self.negs.reshape((b * n,) + self.pos.shape[1:])], axis=0)
        labels = np.concatenate([self.true_labels, self.neg_labels.reshape(-1)])
        return x, labels


def sample_negative_label_matrix(true_labels: np.ndarray, n: int, num_classes: int,
                                 rng: np.random.Generator) -> np.ndarray:
    """
    For every true label draw n distinct incorrect labels uniformly without
    replacement.

    Returns:
        (B, n) integer array
    """
    if not 1 <= n <= num_classes - 1:
        raise ConfigurationError(f"cannot draw {n} distinct incorrect labels out of {num_classes} classes")
    true_labels = np.asarray(true_labels, dtype=np.int64)
    b = true_labels.shape[0]
    keys = rng.random((b, num_classes))
    keys[np.arange(b), true_labels] = np.inf
    return np.argsort(keys, axis=1, kind="stable")[:, :n]


def sample_negative_labels(true_label: int, n: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    """n distinct incorrect labels for a single true label"""
    return sample_negative_label_matrix(np.array([true_label]), n, num_classes, rng)[0]


def make_batch(images: np.ndarray, labels: np.ndarray, n: int, emb: LabelEmbedding,
               rng: np.random.Generator) -> SampleBatch:
    """
    Build positives with the true labels and n negatives per positive with
    randomly drawn incorrect labels.
    """
    labels = np.asarray(labels, dtype=np.int64)
    emb.check_labels(labels)
    neg_labels = sample_negative_label_matrix(labels, n, emb.num_classes, rng)
    b = images.shape[0]

    pos = emb.encode(images, labels)
    repeated = np.repeat(images, n, axis=0)
    negs = emb.encode(repeated, neg_labels.reshape(-1)).reshape((b, n) + pos.shape[1:])
    return SampleBatch(pos=pos, negs=negs, true_labels=labels, neg_labels=neg_labels)
