"""
Model container: a validated layer chain grouped into trainable units.

A unit holds exactly one parameterized (dense/conv) layer. A batchnorm placed
directly in front of the weight layer belongs to that layer's unit, and
activation / pooling / flatten layers are absorbed into the unit they follow.
Local update strategies count windows in units, not raw layers.
"""

import copy
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from distance_forward.core.layers import (
    Layer,
    LayerKind,
    LayerSpec,
    Shape,
    build_layer,
)
from distance_forward.core.params import DEFAULT_DTYPE, Param
from distance_forward.exceptions import ConfigurationError, DimensionError, InvariantError

logger = logging.getLogger(__name__)

UnitCache = List[Dict]


def group_units(layers: Sequence[Layer]) -> List[List[int]]:
    """
    Group layer indices into trainable units.

    Returns:
        List of layer-index lists, one per parameterized layer
    """
    if not any(layer.is_parameterized for layer in layers):
        raise ConfigurationError("Architecture has no parameterized (dense/conv) layer")

    units: List[List[int]] = []
    current: List[int] = []
    has_weight = False
    for i, layer in enumerate(layers):
        starts_new = False
        if has_weight:
            if layer.is_parameterized:
                starts_new = True
            elif (layer.kind == LayerKind.BATCHNORM and i + 1 < len(layers)
                  and layers[i + 1].is_parameterized):
                starts_new = True
        if starts_new:
            units.append(current)
            current = []
            has_weight = False
        current.append(i)
        has_weight = has_weight or layer.is_parameterized
    units.append(current)
    return units


class Model:
    """
    An ordered list of layers grouped into trainable units.

    Shape compatibility of the chain is checked once, at build time.
    """

    def __init__(
        self,
        specs: Sequence[LayerSpec],
        input_shape: Shape,
        rng: Optional[np.random.Generator] = None,
        dtype=DEFAULT_DTYPE,
    ):
        if not specs:
            raise ConfigurationError("Architecture must contain at least one layer")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.specs = [LayerSpec.model_validate(s) for s in specs]
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)

        self.layers: List[Layer] = []
        shape = self.input_shape
        for i, spec in enumerate(self.specs):
            try:
                layer = build_layer(spec, shape, rng, dtype)
            except DimensionError as e:
                raise DimensionError(f"layer {i} ({spec.kind.value}): {e}") from e
            self.layers.append(layer)
            shape = layer.output_shape
            if any(d <= 0 for d in shape):
                raise DimensionError(f"layer {i} ({spec.kind.value}) produces empty output {shape}")

        self.units = group_units(self.layers)
        logger.debug(f"Built model with {len(self.layers)} layers in {len(self.units)} units")

    @property
    def depth(self) -> int:
        """Number of trainable units"""
        return len(self.units)

    @property
    def output_shape(self) -> Shape:
        return self.layers[-1].output_shape

    def unit_layers(self, u: int) -> List[Layer]:
        return [self.layers[i] for i in self.units[u]]

    def unit_output_shape(self, u: int) -> Shape:
        return self.layers[self.units[u][-1]].output_shape

    def unit_input_shape(self, u: int) -> Shape:
        return self.layers[self.units[u][0]].input_shape

    def unit_params(self, u: int) -> List[Param]:
        return [p for layer in self.unit_layers(u) for p in layer.params]

    @property
    def params(self) -> List[Param]:
        return [p for layer in self.layers for p in layer.params]

    def named_params(self) -> List[Tuple[str, Param]]:
        return [
            (f"layers.{i}.{p.name}", p)
            for i, layer in enumerate(self.layers)
            for p in layer.params
        ]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def forward_unit(self, u: int, x: np.ndarray, train: bool) -> Tuple[np.ndarray, UnitCache]:
        caches = []
        for layer in self.unit_layers(u):
            x, cache = layer.forward(x, train)
            caches.append(cache)
        return x, caches

    def backward_unit(self, u: int, grad_out: np.ndarray, caches: UnitCache,
                      need_input_grad: bool = True) -> Optional[np.ndarray]:
        layers = self.unit_layers(u)
        if caches is None or len(caches) != len(layers):
            raise InvariantError(f"Missing forward cache for unit {u}")
        grad = grad_out
        for k in range(len(layers) - 1, -1, -1):
            need = need_input_grad or k > 0
            grad = layers[k].backward(grad, caches[k], need_input_grad=need)
        return grad

    def forward(self, x: np.ndarray, train: bool = False) -> List[np.ndarray]:
        """Run the whole chain and return every unit's output (no caches kept)"""
        outputs = []
        for u in range(self.depth):
            x, _ = self.forward_unit(u, x, train)
            outputs.append(x)
        return outputs

    def unit_cache_elements(self, u: int, batch: int) -> int:
        return sum(layer.cache_elements(batch) for layer in self.unit_layers(u))

    def unit_cache_bytes(self, u: int, batch: int) -> int:
        return sum(layer.cache_bytes(batch, self.dtype.itemsize) for layer in self.unit_layers(u))

    def unit_backward_bytes(self, u: int, batch: int, incoming: int = 0,
                            need_input_grad: bool = True) -> Tuple[int, int]:
        """
        Peak bytes of gradient buffers alive while backward_unit(u) runs, and
        the size of the gradient it returns.

        `incoming` is the received gradient when nothing else holds it; it
        stays alive for the whole call.
        """
        itemsize = self.dtype.itemsize
        layers = self.unit_layers(u)
        peak, current = incoming, 0
        for k in range(len(layers) - 1, -1, -1):
            need = need_input_grad or k > 0
            work = layers[k].backward_work_bytes(batch, itemsize, need)
            peak = max(peak, incoming + current + work)
            current = layers[k].input_bytes(batch, itemsize) if need else 0
        return peak, current

    def astype(self, dtype) -> "Model":
        """Deep copy with every parameter and running statistic cast to dtype"""
        clone = copy.deepcopy(self)
        for layer in clone.layers:
            layer._cast(dtype)
        clone.dtype = np.dtype(dtype)
        return clone


def block_backward(
    model: Model,
    units: Sequence[int],
    loss_grad_at_output: np.ndarray,
    caches: Dict[int, UnitCache],
    need_input_grad: bool = False,
) -> Optional[np.ndarray]:
    """
    Exact chain-rule backward through a contiguous block of units.

    Parameter gradients are accumulated into each Param.grad. The gradient
    with respect to the block input is returned to the caller and never
    pushed into the unit below the block.

    Args:
        model: Owning model
        units: Ascending, contiguous unit indices forming the block
        loss_grad_at_output: dL/d(output of the top unit)
        caches: Forward caches keyed by unit index
        need_input_grad: Whether to compute the gradient w.r.t. the block input

    Returns:
        Gradient w.r.t. the block input, or None
    """
    units = list(units)
    if any(b - a != 1 for a, b in zip(units, units[1:])):
        raise InvariantError(f"Block units must be contiguous, got {units}")
    grad = loss_grad_at_output
    for pos in range(len(units) - 1, -1, -1):
        u = units[pos]
        if u not in caches:
            raise InvariantError(f"Missing forward cache for unit {u} in block {units}")
        need = need_input_grad or pos > 0
        grad = model.backward_unit(u, grad, caches[u], need_input_grad=need)
    return grad


# ---------------------------------------------------------------------------
# Architecture presets
# ---------------------------------------------------------------------------

def mlp_specs(width: int = 1000, depth: int = 3, batchnorm: bool = True) -> List[LayerSpec]:
    """flatten -> [batchnorm -> dense -> relu] x depth"""
    specs = [LayerSpec(kind=LayerKind.FLATTEN)]
    for _ in range(depth):
        if batchnorm:
            specs.append(LayerSpec(kind=LayerKind.BATCHNORM))
        specs.append(LayerSpec(kind=LayerKind.DENSE, out_features=width))
        specs.append(LayerSpec(kind=LayerKind.RELU))
    return specs


def cnn_specs(channels: Sequence[int] = (32, 32, 64, 64, 128, 128),
              pool_after: Sequence[int] = (1, 3, 5), batchnorm: bool = True) -> List[LayerSpec]:
    """
    [batchnorm -> conv3x3 -> relu (-> avgpool2)] per entry of channels.

    pool_after lists the zero-based conv units followed by a 2x2 average pool.
    """
    if not 1 <= len(channels) <= 6:
        raise ConfigurationError("cnn preset supports 1 to 6 conv units")
    specs = []
    for i, c in enumerate(channels):
        if batchnorm:
            specs.append(LayerSpec(kind=LayerKind.BATCHNORM))
        specs.append(LayerSpec(kind=LayerKind.CONV2D, out_channels=c, kernel_size=3, padding=1))
        specs.append(LayerSpec(kind=LayerKind.RELU))
        if i in pool_after:
            specs.append(LayerSpec(kind=LayerKind.AVGPOOL, kernel_size=2))
    return specs
