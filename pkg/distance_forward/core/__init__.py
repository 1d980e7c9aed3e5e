"""
Numeric core: layers, exact block-local gradients, Adam and the cosine schedule
"""
from distance_forward.core.layers import (
    LayerKind,
    LayerSpec,
    RunningStats,
    forward_batchnorm,
    forward_conv2d,
    forward_dense,
)
from distance_forward.core.model import Model, block_backward, cnn_specs, mlp_specs
from distance_forward.core.params import Param, adam_step, cosine_lr

__all__ = [
    'LayerKind', 'LayerSpec', 'RunningStats', 'forward_batchnorm', 'forward_conv2d',
    'forward_dense', 'Model', 'block_backward', 'cnn_specs', 'mlp_specs', 'Param',
    'adam_step', 'cosine_lr',
]
