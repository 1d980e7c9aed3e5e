"""
One streaming training step: forward unit by unit, run each loss's window
backward as soon as its output exists, and free caches nothing above needs.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np

from distance_forward.core.params import Param, adam_step
from distance_forward.exceptions import DivergenceError
from distance_forward.losses.families import GoodnessLoss
from distance_forward.losses.goodness import goodness, goodness_backward
from distance_forward.samples.builder import SampleBatch
from distance_forward.samples.embedding import LabelEmbedding
from distance_forward.training.base import UpdateStrategy
from distance_forward.training.noise import inject_gradient_noise

logger = logging.getLogger(__name__)


@dataclass
class StepResult:
    """
    losses: per-unit loss, NaN where a unit carries no loss (or it was masked).
    pos_goodness / neg_goodness: per-unit batch means.
    window_seconds: backward wall time per loss unit.
    peak_cached_units: most unit caches alive at once.
    """
    losses: np.ndarray
    pos_goodness: np.ndarray
    neg_goodness: np.ndarray
    window_seconds: Dict[int, float] = field(default_factory=dict)
    peak_cached_units: int = 0

    @property
    def backward_seconds(self) -> float:
        return float(sum(self.window_seconds.values()))

    @property
    def critical_path_seconds(self) -> float:
        return float(max(self.window_seconds.values(), default=0.0))


def trainable_params(strategy: UpdateStrategy, emb: LabelEmbedding) -> List[Param]:
    return strategy.model.params + emb.params


def compute_gradients(
    strategy: UpdateStrategy,
    emb: LabelEmbedding,
    loss_fn: GoodnessLoss,
    batch: SampleBatch,
    active_units: Optional[Iterable[int]] = None,
) -> StepResult:
    """
    Accumulate every loss's gradients into Param.grad without updating.

    Args:
        strategy: Decides windows and gradient routing
        emb: Label embedding that produced the batch
        loss_fn: Goodness loss applied at each loss unit
        batch: Positives and their negatives
        active_units: Restrict the losses to these units (others contribute nothing)

    Returns:
        StepResult with per-unit losses and goodness means
    """
    model = strategy.model
    depth = model.depth
    mean_square = loss_fn.cfg.mean_goodness
    b, n = batch.batch_size, batch.n_pairs

    loss_units = set(strategy.loss_units())
    if active_units is not None:
        loss_units &= set(active_units)

    losses = np.full(depth, np.nan)
    pos_means = np.zeros(depth)
    neg_means = np.zeros(depth)
    result = StepResult(losses=losses, pos_goodness=pos_means, neg_goodness=neg_means)

    x, labels = batch.stacked()
    caches = {}
    h = x
    keep = strategy.retained_units()
    for u in range(depth):
        h, caches[u] = model.forward_unit(u, h, train=True)
        result.peak_cached_units = max(result.peak_cached_units, len(caches))

        g = goodness(h, mean_square)
        g_pos, g_negs = g[:b], g[b:].reshape(b, n)
        pos_means[u] = float(np.mean(g_pos))
        neg_means[u] = float(np.mean(g_negs))

        if u in loss_units:
            value = loss_fn.value(g_pos, g_negs)
            if not np.isfinite(value):
                raise DivergenceError(f"Loss at unit {u} is {value}")
            losses[u] = value
            d_pos, d_negs = loss_fn.gradients(g_pos, g_negs)
            d_g = np.concatenate([d_pos, d_negs.reshape(-1)]).astype(h.dtype)
            grad_h = goodness_backward(h, d_g, mean_square)

            to_embedding = strategy.feeds_embedding(u) and bool(emb.params)
            start = time.perf_counter()
            input_grad = strategy.backward_window(u, grad_h, caches, need_input_grad=to_embedding)
            result.window_seconds[u] = time.perf_counter() - start
            if to_embedding and input_grad is not None:
                emb.accumulate_grad(input_grad, labels)

        for v in [v for v in caches if v <= u - keep]:
            del caches[v]

    return result


def apply_updates(
    params: List[Param],
    lr: float,
    grad_noise_sigma: float = 0.0,
    noise_rng: Optional[np.random.Generator] = None,
    noisy: Optional[List[Param]] = None,
) -> None:
    """
    Optional gradient noise, then one Adam step per parameter.

    Args:
        params: Every parameter to update
        lr: Learning rate for this step
        grad_noise_sigma: Relative noise level
        noise_rng: Generator for the noise stream
        noisy: Subset that receives noise (defaults to params)
    """
    if grad_noise_sigma > 0:
        if noise_rng is None:
            raise ValueError("gradient noise requires a noise generator")
        inject_gradient_noise([p.grad for p in (noisy if noisy is not None else params)], grad_noise_sigma, noise_rng)
    for p in params:
        adam_step(p, lr, noise_sigma=grad_noise_sigma)


def train_step(
    strategy: UpdateStrategy,
    emb: LabelEmbedding,
    loss_fn: GoodnessLoss,
    batch: SampleBatch,
    lr: float,
    grad_noise_sigma: float = 0.0,
    noise_rng: Optional[np.random.Generator] = None,
    active_units: Optional[Iterable[int]] = None,
) -> StepResult:
    """Gradients for one batch followed by the parameter update"""
    for p in trainable_params(strategy, emb):
        p.zero_grad()
    result = compute_gradients(strategy, emb, loss_fn, batch, active_units=active_units)
    # noise is injected into layer gradients only, never the label table
    apply_updates(trainable_params(strategy, emb), lr, grad_noise_sigma, noise_rng, noisy=strategy.model.params)
    return result
