"""
Goodness decoding, accuracy metrics, input-noise robustness and weight quantization
"""
from distance_forward.evaluation.decode import (
    EvalReport,
    accuracy,
    decode,
    decode_batch,
    evaluate,
    goodness_table,
    per_layer_accuracy,
)
from distance_forward.evaluation.noise import apply_impulse_noise, apply_noise, apply_poisson_noise
from distance_forward.evaluation.quantize import quantize_tensor, quantize_weights
from distance_forward.evaluation.robustness import RobustnessRow, robustness_sweep

__all__ = [
    'EvalReport', 'accuracy', 'decode', 'decode_batch', 'evaluate', 'goodness_table',
    'per_layer_accuracy', 'apply_impulse_noise', 'apply_noise', 'apply_poisson_noise',
    'quantize_tensor', 'quantize_weights', 'RobustnessRow', 'robustness_sweep',
]
