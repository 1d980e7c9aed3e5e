"""
Gradient-noise injection for the robustness experiments
"""
from typing import List, Sequence

import numpy as np

from distance_forward.config import GRAD_NOISE_SIGMAS


def grad_noise_sigma(level: int) -> float:
    """Relative gradient-noise sigma for grid level 1..5 (0 = clean)"""
    if level == 0:
        return 0.0
    if level not in GRAD_NOISE_SIGMAS:
        raise ValueError(f"gradient noise level must be in 0..5, got {level}")
    return GRAD_NOISE_SIGMAS[level]


def inject_gradient_noise(grads: Sequence[np.ndarray], sigma: float, rng: np.random.Generator) -> List[np.ndarray]:
    """
    Add zero-mean Gaussian noise scaled to each tensor's own RMS, in place:
    grad += sigma * rms(grad) * N(0, 1).

    sigma = 0 leaves the gradients bit-identical and draws nothing from rng.
    """
    grads = list(grads)
    if sigma == 0:
        return grads
    if sigma < 0:
        raise ValueError(f"gradient noise sigma must be non-negative, got {sigma}")
    for g in grads:
        rms = float(np.sqrt(np.mean(np.square(g, dtype=np.float64)))) if g.size else 0.0
        g += (sigma * rms * rng.standard_normal(g.shape)).astype(g.dtype)
    return grads
