"""
Post-training symmetric uniform weight quantization
"""
import logging

import numpy as np

from distance_forward.core.layers import PARAMETERIZED_KINDS
from distance_forward.core.model import Model
from distance_forward.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

MIN_BITS = 2
MAX_BITS = 16


def quantization_step(w: np.ndarray, bits: int) -> float:
    """Delta = max|w| / (2^(bits-1) - 1); 1 for an all-zero tensor"""
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    if peak == 0.0:
        return 1.0
    return peak / (2 ** (bits - 1) - 1)


def quantize_tensor(w: np.ndarray, bits: int) -> np.ndarray:
    """Round w to the nearest multiple of its per-tensor step"""
    if not MIN_BITS <= bits <= MAX_BITS:
        raise ConfigurationError(f"bits must lie in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    delta = quantization_step(w, bits)
    return (np.round(w / delta) * delta).astype(w.dtype)


def quantize_weights(model: Model, bits: int) -> Model:
    """
    Copy of model with every dense / conv weight quantized to `bits`.
    Biases and batch-norm parameters stay at full precision.
    """
    if not MIN_BITS <= bits <= MAX_BITS:
        raise ConfigurationError(f"bits must lie in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    quantized = model.astype(model.dtype)
    for layer in quantized.layers:
        if layer.kind in PARAMETERIZED_KINDS:
            layer.weight.value = quantize_tensor(layer.weight.value, bits)
    logger.debug(f"Quantized {sum(l.kind in PARAMETERIZED_KINDS for l in quantized.layers)} weight tensors to {bits} bits")
    return quantized
