"""
Goodness, the goodness-based losses and the weight-split distance form.

Goodness is the squared L2 norm of a unit's activations. In the distance
reading, a first-layer goodness is the squared distance between the
projected image and the projected label (the anchor).
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Tuple

import numpy as np

from distance_forward.config import Aggregation, LossConfig
from distance_forward.exceptions import ConfigurationError, DimensionError, InsufficientDataError


def goodness(v: np.ndarray, mean_square: bool = False) -> np.ndarray:
    """
    Per-sample sum of squared entries over all non-batch dimensions.

    Args:
        v: Activations with a leading batch axis
        mean_square: Divide by the number of units per sample

    Returns:
        Array of shape (B,)
    """
    flat = v.reshape(v.shape[0], -1)
    g = np.einsum("ij,ij->i", flat, flat)
    if mean_square:
        g = g / flat.shape[1]
    return g


def goodness_backward(v: np.ndarray, grad_g: np.ndarray, mean_square: bool = False) -> np.ndarray:
    """dL/dv given dL/dg for g = goodness(v)"""
    scale = 2.0 / (v[0].size if mean_square else 1.0)
    shape = (v.shape[0],) + (1,) * (v.ndim - 1)
    return (scale * grad_g).astype(v.dtype, copy=False).reshape(shape) * v


def neg_log_sigmoid(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(-x)), stable for large |x|"""
    return np.logaddexp(0.0, -x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def _as_negative_matrix(g_pos: np.ndarray, g_neg: np.ndarray) -> np.ndarray:
    g_neg = np.asarray(g_neg)
    if g_neg.ndim == 1:
        g_neg = g_neg[:, None]
    if g_neg.ndim != 2 or g_neg.shape[0] != g_pos.shape[0]:
        raise DimensionError(f"negative goodness {g_neg.shape} does not match positives {g_pos.shape}")
    return g_neg


def ff_loss(g_pos: np.ndarray, g_neg: np.ndarray, theta: float) -> float:
    """
    Mean over the batch of s(g_pos - theta) + s(theta - g_neg) with
    s(x) = log(1 + exp(-x)). With several negatives per positive the
    negative term is averaged over them.
    """
    g_pos = np.asarray(g_pos, dtype=np.float64)
    g_neg = _as_negative_matrix(g_pos, np.asarray(g_neg, dtype=np.float64))
    per_sample = neg_log_sigmoid(g_pos - theta) + neg_log_sigmoid(theta - g_neg).mean(axis=1)
    return float(per_sample.mean())


def symba_loss(g_pos: np.ndarray, g_neg: np.ndarray) -> float:
    """Mean over the batch (and negatives) of s(g_pos - g_neg)"""
    g_pos = np.asarray(g_pos, dtype=np.float64)
    g_neg = _as_negative_matrix(g_pos, np.asarray(g_neg, dtype=np.float64))
    return float(neg_log_sigmoid(g_pos[:, None] - g_neg).mean())


def margin_loss(g_pos: np.ndarray, g_neg: np.ndarray, margin: float, lambda_reg: float) -> float:
    """Single-negative margin loss: mean of max(m + g_neg - g_pos, 0) + lambda * g_neg"""
    g_pos = np.asarray(g_pos, dtype=np.float64)
    g_neg = np.asarray(g_neg, dtype=np.float64)
    return float(np.mean(np.maximum(margin + g_neg - g_pos, 0.0) + lambda_reg * g_neg))


def aggregate_negatives(g_negs: np.ndarray, aggregation: Aggregation) -> np.ndarray:
    if aggregation == Aggregation.MAX:
        return g_negs.max(axis=1)
    return g_negs.mean(axis=1)


def df_margin_loss(g_pos: np.ndarray, g_negs: np.ndarray, cfg: LossConfig) -> float:
    """
    N-pair margin loss: mean over the batch of
    max(m + A - g_pos, 0) + lambda * A, where A aggregates the N negatives
    by max (default) or mean.
    """
    g_pos = np.asarray(g_pos, dtype=np.float64)
    g_negs = np.asarray(g_negs, dtype=np.float64)
    if g_negs.ndim != 2 or g_negs.shape[0] != g_pos.shape[0]:
        raise DimensionError(f"negative goodness {g_negs.shape} must be (B, N) with B={g_pos.shape[0]}")
    n = g_negs.shape[1]
    if n == 0:
        raise ConfigurationError("df_margin_loss needs at least one negative per positive")
    if cfg.n_pairs is not None and n != cfg.n_pairs:
        raise ConfigurationError(f"got {n} negatives per positive, config expects n_pairs={cfg.n_pairs}")
    agg = aggregate_negatives(g_negs, cfg.aggregation)
    return float(np.mean(np.maximum(cfg.margin + agg - g_pos, 0.0) + cfg.lambda_reg * agg))


def split_goodness(W: np.ndarray, x_star: np.ndarray, K: int) -> Tuple[float, float]:
    """
    Goodness of a label-pixel-replaced input computed directly and in the
    weight-split distance form.

    The first K input slots of x_star hold the one-hot label y. W_y are the K
    weight columns acting on those slots and W_x is W with them zeroed, so
    W x* = W_x x - W_y^- y with W_y^- = -W_y (the label anchor).

    Returns:
        (g_direct, g_split)
    """
    W = np.asarray(W, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64).ravel()
    m = W.shape[1]
    if x_star.shape[0] != m:
        raise DimensionError(f"split_goodness: weight {W.shape} incompatible with input {x_star.shape}")
    if not 0 <= K < m:
        raise DimensionError(f"split_goodness: K={K} must be smaller than the input width {m}")

    g_direct = float(np.sum((W @ x_star) ** 2))

    y = x_star[:K]
    x = x_star.copy()
    x[:K] = 0.0
    W_x = W.copy()
    W_x[:, :K] = 0.0
    W_y_neg = -W[:, :K]
    anchor = W_y_neg @ y
    g_split = float(np.sum((W_x @ x - anchor) ** 2))
    return g_direct, g_split


class Polarity(str, Enum):
    POS = "pos"
    NEG = "neg"


@dataclass
class GoodnessRecord:
    """Per-unit goodness of one sample"""
    goodness: np.ndarray
    polarity: Polarity
    label: int

    def __post_init__(self):
        self.goodness = np.asarray(self.goodness, dtype=np.float64)
        if np.any(self.goodness < 0):
            raise ValueError("goodness values are sums of squares and cannot be negative")


def goodness_separation(records: Iterable[GoodnessRecord], layer: int) -> float:
    """Mean positive goodness minus mean negative goodness at one unit"""
    pos, neg = [], []
    for record in records:
        (pos if record.polarity == Polarity.POS else neg).append(record.goodness[layer])
    return separation_from_arrays(np.asarray(pos), np.asarray(neg), layer)


def separation_from_arrays(g_pos: np.ndarray, g_neg: np.ndarray, layer: Optional[int] = None) -> float:
    where = f" at unit {layer}" if layer is not None else ""
    if np.size(g_pos) == 0 or np.size(g_neg) == 0:
        raise InsufficientDataError(f"goodness separation{where} needs both positive and negative samples")
    return float(np.mean(g_pos) - np.mean(g_neg))
