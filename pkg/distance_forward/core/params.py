"""
Trainable parameters, the Adam optimizer and the cosine learning-rate schedule
"""

import math
from dataclasses import dataclass, field

import numpy as np

from distance_forward.exceptions import ConfigurationError, NonFiniteGradientError

DEFAULT_DTYPE = np.float32

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Param:
    """
    A parameter tensor together with its gradient and Adam state.

    grad, adam_m and adam_v always share the shape of value.
    """
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)
    step_count: int = 0

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad.fill(0)

    def astype(self, dtype) -> "Param":
        """Return a copy with every tensor cast to dtype (optimizer state included)"""
        clone = Param(self.name, self.value.astype(dtype))
        clone.grad = self.grad.astype(dtype)
        clone.adam_m = self.adam_m.astype(dtype)
        clone.adam_v = self.adam_v.astype(dtype)
        clone.step_count = self.step_count
        return clone


def adam_step(
    param: Param,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
    noise_sigma: float = 0.0,
) -> Param:
    """
    Apply one bias-corrected Adam update to param in place and zero its gradient.

    A parameter no loss reached (all-zero gradient) keeps its value, its
    moments and its step count.

    Args:
        param: Parameter with a populated grad
        lr: Learning rate for this step
        noise_sigma: Gradient-noise level in effect, only used for diagnostics

    Returns:
        The same Param, updated
    """
    grad = param.grad
    if not np.all(np.isfinite(grad)):
        bad = int(np.size(grad) - np.count_nonzero(np.isfinite(grad)))
        raise NonFiniteGradientError(
            f"Non-finite gradient in '{param.name}' ({bad} of {grad.size} entries) "
            f"at step {param.step_count}; injected gradient noise sigma={noise_sigma}"
        )

    if not np.any(grad):
        return param

    param.step_count += 1
    t = param.step_count
    dtype = param.value.dtype

    param.adam_m *= dtype.type(beta1)
    param.adam_m += dtype.type(1.0 - beta1) * grad
    param.adam_v *= dtype.type(beta2)
    param.adam_v += dtype.type(1.0 - beta2) * (grad * grad)

    m_hat = param.adam_m / dtype.type(1.0 - beta1 ** t)
    v_hat = param.adam_v / dtype.type(1.0 - beta2 ** t)
    param.value -= dtype.type(lr) * m_hat / (np.sqrt(v_hat) + dtype.type(eps))

    param.zero_grad()
    return param


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """
    Cosine-annealed learning rate: base_lr at step 0, zero at total_steps.
    """
    if total_steps <= 0:
        raise ConfigurationError(f"total_steps must be positive, got {total_steps}")
    if step < 0 or step > total_steps:
        raise ConfigurationError(f"step {step} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
