"""
Accuracy under input noise and weight quantization
"""
import logging
from typing import List, Optional, Sequence

from pydantic import BaseModel

from distance_forward.config import NoiseKind, NoiseSpec, RobustnessConfig
from distance_forward.core.model import Model
from distance_forward.data.dataset import Dataset
from distance_forward.data.normalize import NormalizationStats, normalize_images
from distance_forward.evaluation.decode import accuracy
from distance_forward.evaluation.noise import apply_noise, noise_parameter
from distance_forward.evaluation.quantize import quantize_weights
from distance_forward.exceptions import ConfigurationError
from distance_forward.samples.embedding import LabelEmbedding
from distance_forward.seeding import named_rng

logger = logging.getLogger(__name__)

KIND_CODES = {NoiseKind.NONE: 0, NoiseKind.POISSON_SHOT: 1, NoiseKind.IMPULSE: 2}


class RobustnessRow(BaseModel):
    kind: str
    level: int
    parameter: float
    bits: Optional[int] = None
    accuracy: float


def _cells(kinds: Sequence[NoiseKind], levels: Sequence[int]) -> List[NoiseSpec]:
    cells = []
    for kind in kinds:
        if kind == NoiseKind.NONE:
            cells.append(NoiseSpec(kind=kind, level=1))
        else:
            cells.extend(NoiseSpec(kind=kind, level=lv) for lv in levels)
    return cells


def robustness_sweep(
    model: Model,
    emb: LabelEmbedding,
    raw_test: Dataset,
    stats: NormalizationStats,
    layer_set: Sequence[int],
    config: RobustnessConfig,
    mean_square: bool = False,
    threads: int = 1,
) -> List[RobustnessRow]:
    """
    Accuracy for every (noise kind, level) cell, then for every quantization
    bit width on clean inputs.

    Noise acts on the raw [0, 1] images before normalization with the
    training statistics. Each cell draws from its own fixed generator.

    Args:
        model: Trained model
        emb: Its label embedding
        raw_test: Test split, not normalized
        stats: Training-split normalization statistics
        layer_set: Units to decode from
        config: Grid and seed
    """
    if raw_test.normalized:
        raise ConfigurationError("robustness_sweep needs the raw test split; noise is applied before normalization")
    test = raw_test.subset(limit=config.samples)
    rows: List[RobustnessRow] = []

    for spec in _cells(config.kinds, config.levels):
        rng = named_rng(config.seed, "robustness", KIND_CODES[spec.kind], spec.level)
        noisy = test.with_images(normalize_images(apply_noise(test.images, spec, rng), stats), normalized=True)
        acc = accuracy(model, emb, noisy, layer_set, mean_square, threads)
        rows.append(RobustnessRow(kind=spec.kind.value, level=0 if spec.kind == NoiseKind.NONE else spec.level,
                                  parameter=noise_parameter(spec), accuracy=acc))
        logger.info(f"noise {spec.kind.value} level {rows[-1].level}: accuracy {acc:.4f}")

    clean = test.with_images(normalize_images(test.images, stats), normalized=True)
    for bits in config.quant_bits:
        acc = accuracy(quantize_weights(model, bits), emb, clean, layer_set, mean_square, threads)
        rows.append(RobustnessRow(kind="quantization", level=0, parameter=float(bits), bits=bits, accuracy=acc))
        logger.info(f"{bits}-bit weights: accuracy {acc:.4f}")

    return rows
