"""
Backward-time measurement and depth-scaling fits
"""
import logging
import time
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from distance_forward.exceptions import InsufficientDataError
from distance_forward.losses.families import GoodnessLoss
from distance_forward.samples.builder import SampleBatch
from distance_forward.samples.embedding import LabelEmbedding
from distance_forward.training.base import UpdateStrategy
from distance_forward.training.step import compute_gradients

logger = logging.getLogger(__name__)


class TimingStats(BaseModel):
    """Milliseconds per step, median and interquartile range over repetitions"""
    repetitions: int
    backward_ms_median: float
    backward_ms_iqr: float
    critical_path_ms_median: float
    critical_path_ms_iqr: float
    wall_ms_median: float


def _median_iqr(values: Sequence[float]) -> Tuple[float, float]:
    q1, med, q3 = np.percentile(np.asarray(values) * 1e3, [25, 50, 75])
    return float(med), float(q3 - q1)


def backward_time(strategy: UpdateStrategy, emb: LabelEmbedding, loss_fn: GoodnessLoss, batch: SampleBatch,
                  repetitions: int = 50, warmup: int = 10) -> TimingStats:
    """
    Time the gradient computation of repeated steps on one batch.

    backward covers the window backward passes only (no forward, no data,
    no optimizer step), summed over windows. critical_path is the slowest
    single window, the step time if windows ran in parallel. wall is the
    whole gradient step including the forward pass.
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be positive, got {repetitions}")
    params = strategy.model.params + emb.params
    serial, critical, wall = [], [], []
    for rep in range(warmup + repetitions):
        for p in params:
            p.zero_grad()
        start = time.perf_counter()
        result = compute_gradients(strategy, emb, loss_fn, batch)
        elapsed = time.perf_counter() - start
        if rep < warmup:
            continue
        serial.append(result.backward_seconds)
        critical.append(result.critical_path_seconds)
        wall.append(elapsed)
    for p in params:
        p.zero_grad()

    b_med, b_iqr = _median_iqr(serial)
    c_med, c_iqr = _median_iqr(critical)
    w_med, _ = _median_iqr(wall)
    return TimingStats(
        repetitions=repetitions,
        backward_ms_median=b_med,
        backward_ms_iqr=b_iqr,
        critical_path_ms_median=c_med,
        critical_path_ms_iqr=c_iqr,
        wall_ms_median=w_med,
    )


class ScalingFit(BaseModel):
    slope: float
    intercept: float
    r_squared: float


def fit_depth_scaling(depths: Sequence[float], times: Sequence[float]) -> ScalingFit:
    """Least-squares line through (depth, time) with its coefficient of determination"""
    x = np.asarray(depths, dtype=np.float64)
    y = np.asarray(times, dtype=np.float64)
    if x.size < 2 or x.size != y.size:
        raise InsufficientDataError(f"need at least two (depth, time) pairs, got {x.size} depths and {y.size} times")
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual ** 2)) / total if total > 0 else 1.0
    return ScalingFit(slope=float(slope), intercept=float(intercept), r_squared=r2)
