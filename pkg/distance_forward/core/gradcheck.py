"""
Central finite-difference gradient checks for layers and unit blocks.

Intended for 64-bit copies of layers/models; 32-bit precision is too coarse
for the differences to be meaningful.
"""

from typing import Callable, Dict, Sequence

import numpy as np

from distance_forward.core.layers import Layer
from distance_forward.core.model import Model, block_backward

FD_STEP = 1e-5


def numerical_gradient(f: Callable[[], float], array: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """
    Central-difference gradient of the scalar f() with respect to array.

    array is perturbed in place and restored entry by entry.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    for idx in np.ndindex(*array.shape):
        original = array[idx].copy()
        array[idx] = original + h
        plus = f()
        array[idx] = original - h
        minus = f()
        array[idx] = original
        grad[idx] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    scale = np.linalg.norm(np.ravel(analytic)) + np.linalg.norm(np.ravel(numeric))
    if scale == 0.0:
        return 0.0
    return float(diff / scale)


def check_layer_gradients(layer: Layer, x: np.ndarray, rng: np.random.Generator,
                          train: bool = True) -> Dict[str, float]:
    """
    Compare a layer's backward pass with finite differences of
    L = sum(forward(x) * R) for a fixed random R.

    Returns:
        Relative error per parameter name plus 'input'
    """
    out, _ = layer.forward(x, train)
    cotangent = rng.standard_normal(out.shape)

    def loss() -> float:
        return float(np.sum(layer.forward(x, train)[0] * cotangent))

    for p in layer.params:
        p.zero_grad()
    _, cache = layer.forward(x, train)
    dx = layer.backward(cotangent, cache, need_input_grad=True)

    errors = {"input": relative_error(dx, numerical_gradient(loss, x))}
    for p in layer.params:
        errors[p.name] = relative_error(p.grad, numerical_gradient(loss, p.value))
    return errors


def check_block_gradients(model: Model, units: Sequence[int], x: np.ndarray,
                          rng: np.random.Generator, train: bool = True) -> Dict[str, float]:
    """
    Finite-difference check of block_backward over contiguous units.

    x is the input of the first unit of the block.
    """
    units = list(units)

    def run(inp):
        caches = {}
        h = inp
        for u in units:
            h, caches[u] = model.forward_unit(u, h, train)
        return h, caches

    out, _ = run(x)
    cotangent = rng.standard_normal(out.shape)

    def loss() -> float:
        return float(np.sum(run(x)[0] * cotangent))

    model.zero_grad()
    _, caches = run(x)
    dx = block_backward(model, units, cotangent, caches, need_input_grad=True)

    errors = {"input": relative_error(dx, numerical_gradient(loss, x))}
    for u in units:
        for layer_index in model.units[u]:
            for p in model.layers[layer_index].params:
                errors[f"layers.{layer_index}.{p.name}"] = relative_error(
                    p.grad, numerical_gradient(loss, p.value)
                )
    return errors
