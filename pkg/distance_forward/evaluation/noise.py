"""
Test-time input corruptions on [0, 1] images
"""
import numpy as np

from distance_forward.config import NoiseKind, NoiseSpec

POISSON_LAMBDAS = {1: 60.0, 2: 25.0, 3: 12.0, 4: 5.0, 5: 3.0}
IMPULSE_PROBS = {1: 0.01, 2: 0.03, 3: 0.06, 4: 0.1, 5: 0.17}


def _check_level(level: int, grid: dict) -> None:
    if level not in grid:
        raise ValueError(f"noise level must be in 1..5, got {level}")


def poisson_noise(images: np.ndarray, lam: float, rng: np.random.Generator) -> np.ndarray:
    """pixel <- Poisson(pixel * lam) / lam, clamped to [0, 1]"""
    noisy = rng.poisson(np.clip(images, 0.0, 1.0) * lam) / lam
    return np.clip(noisy, 0.0, 1.0).astype(images.dtype)


def apply_poisson_noise(images: np.ndarray, level: int, rng: np.random.Generator) -> np.ndarray:
    """Photon shot noise at grid level 1..5"""
    _check_level(level, POISSON_LAMBDAS)
    return poisson_noise(images, POISSON_LAMBDAS[level], rng)


def impulse_noise(images: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """
    Each pixel location is corrupted with probability p; a corrupted pixel
    gets an independent 0 or 1 per channel.

    Args:
        images: (N, C, H, W) in [0, 1]
    """
    out = images.copy()
    if p <= 0:
        return out
    n, c, h, w = images.shape
    hit = rng.random((n, 1, h, w)) < p
    values = (rng.random((n, c, h, w)) < 0.5).astype(images.dtype)
    mask = np.broadcast_to(hit, out.shape)
    out[mask] = values[mask]
    return out


def apply_impulse_noise(images: np.ndarray, level: int, rng: np.random.Generator) -> np.ndarray:
    """Colour salt-and-pepper noise at grid level 1..5"""
    _check_level(level, IMPULSE_PROBS)
    return impulse_noise(images, IMPULSE_PROBS[level], rng)


def apply_noise(images: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == NoiseKind.NONE:
        return images.copy()
    if spec.kind == NoiseKind.POISSON_SHOT:
        return apply_poisson_noise(images, spec.level, rng)
    return apply_impulse_noise(images, spec.level, rng)


def noise_parameter(spec: NoiseSpec) -> float:
    """The grid value behind a spec (lambda or p; 0 for none)"""
    if spec.kind == NoiseKind.POISSON_SHOT:
        return POISSON_LAMBDAS[spec.level]
    if spec.kind == NoiseKind.IMPULSE:
        return IMPULSE_PROBS[spec.level]
    return 0.0
