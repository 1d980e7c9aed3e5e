"""
Training memory accounting: closed-form element counts and a measured
cross-check of one training step.
"""
import logging
import os
import tracemalloc
from typing import Optional, Sequence

import numpy as np
import psutil
from pydantic import BaseModel, Field

from distance_forward.config import StrategyConfig, StrategyKind
from distance_forward.core.layers import LayerSpec, Shape
from distance_forward.core.model import Model
from distance_forward.losses.families import GoodnessLoss
from distance_forward.samples.builder import SampleBatch
from distance_forward.samples.embedding import LabelEmbedding
from distance_forward.training.base import UpdateStrategy
from distance_forward.training.registry import build_strategy
from distance_forward.training.step import compute_gradients

logger = logging.getLogger(__name__)

OPTIMIZER_STATES_PER_PARAM = 2  # Adam first and second moments


class MemoryLedger(BaseModel):
    """Element counts for one strategy on one architecture"""
    strategy: StrategyKind
    depth: int
    batch_rows: int = Field(..., description="Rows per forward pass (positives plus negatives)")
    group_size: int
    param_elems: int
    grad_elems: int
    opt_elems: int
    act_elems_peak: int = Field(..., description="Peak stored-activation elements during one step")
    feedback_elems: int = 0
    step_peak_bytes: int = Field(0, description="Peak bytes one gradient computation allocates (caches and transients)")
    dtype_bytes: int = 4

    @property
    def total_elems(self) -> int:
        return self.param_elems + self.grad_elems + self.opt_elems + self.act_elems_peak + self.feedback_elems

    @property
    def total_bytes(self) -> int:
        return self.total_elems * self.dtype_bytes


class MeasuredMemory(BaseModel):
    supported: bool
    peak_bytes: Optional[int] = Field(None, description="Peak traced allocation above the pre-step baseline")
    rss_bytes: Optional[int] = Field(None, description="Process resident set size after the step")


def activation_peak(model: Model, window: int, batch_rows: int) -> int:
    """Largest sum of unit cache elements over any `window` consecutive units"""
    per_unit = [model.unit_cache_elements(u, batch_rows) for u in range(model.depth)]
    window = max(1, min(window, model.depth))
    return max(sum(per_unit[i:i + window]) for i in range(model.depth - window + 1))


def _rows_bytes(model: Model, shape: Shape, batch_rows: int) -> int:
    return batch_rows * int(np.prod(shape)) * model.dtype.itemsize


def _window_backward_bytes(model: Model, strategy: UpdateStrategy, top: int, batch_rows: int,
                           need_input_grad: bool) -> int:
    window = strategy.window(top)
    bottom = window[0]
    if strategy.get_metadata().uses_feedback:
        peak, _ = model.unit_backward_bytes(top, batch_rows, 0, need_input_grad and top == bottom)
        for i in window[:-1]:
            signal = _rows_bytes(model, model.unit_output_shape(i), batch_rows)
            p, _ = model.unit_backward_bytes(i, batch_rows, signal, need_input_grad and i == bottom)
            peak = max(peak, p)
        return peak
    peak, incoming = 0, 0
    for u in reversed(window):
        p, incoming = model.unit_backward_bytes(u, batch_rows, incoming, need_input_grad or u > bottom)
        peak = max(peak, p)
    return peak


def step_peak_bytes(model: Model, strategy: UpdateStrategy, batch_rows: int,
                    embedding_grad: bool = False) -> int:
    """
    Closed-form peak of the arrays one compute_gradients call allocates.

    Counts the stacked input, the unit caches alive together, the current
    activation and its goodness gradient, and the gradient buffers of the
    window being backpropagated. Forward temporaries are bounded by two
    output-sized arrays per unit.
    """
    cache = [model.unit_cache_bytes(u, batch_rows) for u in range(model.depth)]
    stacked = _rows_bytes(model, model.input_shape, batch_rows)
    keep = strategy.retained_units()
    loss_units = set(strategy.loss_units())
    peak = 0
    for u in range(model.depth):
        held = stacked + sum(cache[max(0, u - keep):u + 1])
        out = _rows_bytes(model, model.unit_output_shape(u), batch_rows)
        previous = _rows_bytes(model, model.unit_input_shape(u), batch_rows) if u > 0 else 0
        peak = max(peak, held + previous + 2 * out)
        if u in loss_units:
            need = embedding_grad and strategy.feeds_embedding(u)
            peak = max(peak, held + 2 * out + _window_backward_bytes(model, strategy, u, batch_rows, need))
    return peak


def ledger_for(model: Model, strategy: UpdateStrategy, batch_rows: int,
               embedding_grad: bool = False) -> MemoryLedger:
    params = sum(p.size for p in model.params)
    feedback = strategy.feedback.elements if getattr(strategy, "feedback", None) is not None else 0
    return MemoryLedger(
        strategy=strategy.get_metadata().kind,
        depth=model.depth,
        batch_rows=batch_rows,
        group_size=strategy.group_size,
        param_elems=params,
        grad_elems=params,
        opt_elems=OPTIMIZER_STATES_PER_PARAM * params,
        act_elems_peak=activation_peak(model, strategy.retained_units() + 1, batch_rows),
        feedback_elems=feedback,
        step_peak_bytes=step_peak_bytes(model, strategy, batch_rows, embedding_grad),
        dtype_bytes=model.dtype.itemsize,
    )


def analytic_memory(specs: Sequence[LayerSpec], input_shape: Shape, strategy: StrategyConfig,
                    batch_rows: int) -> MemoryLedger:
    """
    Closed-form ledger for an architecture.

    Args:
        specs: Layer chain
        input_shape: Per-sample network input shape
        strategy: Strategy to account for
        batch_rows: Rows in one forward pass

    Returns:
        MemoryLedger; BP stores every unit's activations, local strategies
        at most group_size units' at a time
    """
    model = Model(specs, input_shape, rng=np.random.default_rng(0))
    return ledger_for(model, build_strategy(model, strategy), batch_rows)


def process_rss() -> Optional[int]:
    try:
        return int(psutil.Process(os.getpid()).memory_info().rss)
    except psutil.Error as e:
        logger.warning(f"RSS measurement unavailable: {e}")
        return None


def measured_peak_memory(strategy: UpdateStrategy, emb: LabelEmbedding, loss_fn: GoodnessLoss,
                         batch: SampleBatch) -> MeasuredMemory:
    """
    Peak traced allocation of one gradient computation, above the baseline
    held before it started.
    """
    for p in strategy.model.params + emb.params:
        p.zero_grad()
    was_tracing = tracemalloc.is_tracing()
    try:
        if not was_tracing:
            tracemalloc.start()
        tracemalloc.reset_peak()
    except (RuntimeError, AttributeError) as e:
        logger.warning(f"Memory instrumentation unsupported ({e}); reporting analytic values only")
        return MeasuredMemory(supported=False, rss_bytes=process_rss())
    try:
        baseline, _ = tracemalloc.get_traced_memory()
        compute_gradients(strategy, emb, loss_fn, batch)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        if not was_tracing:
            tracemalloc.stop()
    return MeasuredMemory(supported=True, peak_bytes=int(peak - baseline), rss_bytes=process_rss())
