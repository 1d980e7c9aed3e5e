"""
Goodness decoding: score every candidate label and pick the best.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from distance_forward.config import DecodeConfig
from distance_forward.core.model import Model
from distance_forward.data.dataset import Dataset
from distance_forward.losses.goodness import goodness, separation_from_arrays
from distance_forward.samples.embedding import LabelEmbedding

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 100


def _table_chunk(model: Model, emb: LabelEmbedding, images: np.ndarray, mean_square: bool) -> np.ndarray:
    b, k = images.shape[0], emb.num_classes
    # all K candidates of an image go through one forward pass
    repeated = np.repeat(images.astype(model.dtype, copy=False), k, axis=0)
    candidates = np.tile(np.arange(k), b)
    h = emb.encode(repeated, candidates)
    table = np.empty((b * k, model.depth))
    for u in range(model.depth):
        h, _ = model.forward_unit(u, h, train=False)
        table[:, u] = goodness(h, mean_square)
    return table.reshape(b, k, model.depth)


def goodness_table(
    model: Model,
    emb: LabelEmbedding,
    images: np.ndarray,
    mean_square: bool = False,
    chunk_size: int = DEFAULT_CHUNK,
    threads: int = 1,
) -> np.ndarray:
    """
    Goodness of every unit for every (image, candidate label) pair.

    Args:
        model: Trained model, run with batch norm in eval mode
        emb: Label embedding
        images: (B, C, H, W) normalized images
        mean_square: Use mean-square goodness
        chunk_size: Images per forward pass
        threads: Worker threads over chunks; the model is only read

    Returns:
        (B, K, depth) array
    """
    chunks = [images[i:i + chunk_size] for i in range(0, images.shape[0], chunk_size)]
    if not chunks:
        return np.zeros((0, emb.num_classes, model.depth))
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _table_chunk(model, emb, c, mean_square), chunks))
    else:
        parts = [_table_chunk(model, emb, c, mean_square) for c in chunks]
    return np.concatenate(parts, axis=0)


def predict_from_table(table: np.ndarray, layer_set: Sequence[int]) -> np.ndarray:
    """argmax over candidates of the goodness summed over layer_set; ties go to the smallest label"""
    scores = table[:, :, list(layer_set)].sum(axis=2)
    return np.argmax(scores, axis=1)


def decode(model: Model, image: np.ndarray, emb: LabelEmbedding, cfg: Optional[DecodeConfig] = None,
           mean_square: bool = False) -> int:
    """Predicted label of a single (C, H, W) image"""
    cfg = cfg or DecodeConfig()
    layer_set = cfg.resolve(model.depth)
    return int(predict_from_table(goodness_table(model, emb, image[None], mean_square), layer_set)[0])


def decode_batch(model: Model, emb: LabelEmbedding, images: np.ndarray, layer_set: Sequence[int],
                 mean_square: bool = False, threads: int = 1) -> np.ndarray:
    return predict_from_table(goodness_table(model, emb, images, mean_square, threads=threads), layer_set)


def accuracy(model: Model, emb: LabelEmbedding, dataset: Dataset, layer_set: Sequence[int],
             mean_square: bool = False, threads: int = 1) -> float:
    if len(dataset) == 0:
        return float("nan")
    predictions = decode_batch(model, emb, dataset.images, layer_set, mean_square, threads)
    return float(np.mean(predictions == dataset.labels))


def per_layer_accuracy(model: Model, emb: LabelEmbedding, dataset: Dataset, mean_square: bool = False,
                       threads: int = 1) -> List[float]:
    """Decoding accuracy from each unit alone"""
    table = goodness_table(model, emb, dataset.images, mean_square, threads=threads)
    return [float(np.mean(predict_from_table(table, [u]) == dataset.labels)) for u in range(model.depth)]


def table_separation(table: np.ndarray, labels: np.ndarray) -> List[float]:
    """
    Per-unit mean goodness under the true label minus mean goodness under
    every incorrect label.
    """
    b, k, depth = table.shape
    true_mask = np.zeros((b, k), dtype=bool)
    true_mask[np.arange(b), labels] = True
    return [
        separation_from_arrays(table[:, :, u][true_mask], table[:, :, u][~true_mask], u)
        for u in range(depth)
    ]


class EvalReport(BaseModel):
    """Overall, per-unit and all-unit decoding accuracy plus per-unit separation"""
    samples: int
    layer_set: List[int]
    accuracy: float
    all_layers_accuracy: float
    per_layer_accuracy: List[float]
    separation: List[float] = Field(..., description="True-label minus incorrect-label goodness per unit")

    def rows(self) -> List[dict]:
        rows = [
            {"scope": "layer_set", "unit": ",".join(str(u) for u in self.layer_set),
             "accuracy": self.accuracy, "separation": None},
            {"scope": "all", "unit": "all", "accuracy": self.all_layers_accuracy, "separation": None},
        ]
        for u, (acc, sep) in enumerate(zip(self.per_layer_accuracy, self.separation)):
            rows.append({"scope": "unit", "unit": str(u), "accuracy": acc, "separation": sep})
        return rows


def evaluate(model: Model, emb: LabelEmbedding, dataset: Dataset, layer_set: Sequence[int],
             mean_square: bool = False, threads: int = 1) -> EvalReport:
    """One goodness table over the dataset, summarised every way the eval report needs"""
    table = goodness_table(model, emb, dataset.images, mean_square, threads=threads)
    labels = np.asarray(dataset.labels)
    all_units = list(range(model.depth))
    report = EvalReport(
        samples=len(dataset),
        layer_set=list(layer_set),
        accuracy=float(np.mean(predict_from_table(table, layer_set) == labels)),
        all_layers_accuracy=float(np.mean(predict_from_table(table, all_units) == labels)),
        per_layer_accuracy=[float(np.mean(predict_from_table(table, [u]) == labels)) for u in all_units],
        separation=table_separation(table, labels) if emb.num_classes > 1 else [0.0] * model.depth,
    )
    logger.info(
        f"Evaluated {report.samples} samples: accuracy {report.accuracy:.4f} (units {report.layer_set}), "
        f"per unit {[round(a, 4) for a in report.per_layer_accuracy]}"
    )
    return report
