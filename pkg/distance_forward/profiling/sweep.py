"""
Strategy x depth profiling sweep on uniform-width MLPs
"""
import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from distance_forward.config import LabelMode, LossConfig, ProfileConfig, StrategyConfig, StrategyKind
from distance_forward.core.model import Model, mlp_specs
from distance_forward.losses.families import build_loss
from distance_forward.profiling.memory import ledger_for, measured_peak_memory
from distance_forward.profiling.timing import backward_time
from distance_forward.samples.builder import make_batch
from distance_forward.samples.embedding import LabelEmbedding
from distance_forward.seeding import named_rng
from distance_forward.training.registry import build_strategy

logger = logging.getLogger(__name__)

PROFILE_CLASSES = 10


class ProfileRow(BaseModel):
    strategy: str
    depth: int
    batch: int
    batch_rows: int
    group_size: int
    param_elems: int
    opt_elems: int
    act_elems_peak: int
    feedback_elems: int
    analytic_peak_bytes: int
    measured_peak_bytes: Optional[int] = None
    rss_bytes: Optional[int] = None
    backward_ms_median: float
    backward_ms_iqr: float
    critical_path_ms_median: float
    wall_ms_median: float


def strategy_config(kind: StrategyKind) -> StrategyConfig:
    if kind in (StrategyKind.GREEDY, StrategyKind.BP):
        return StrategyConfig(kind=kind)
    return StrategyConfig(kind=kind, group_size=2)


def profile_sweep(config: ProfileConfig, loss_config: Optional[LossConfig] = None, seed: int = 0) -> List[ProfileRow]:
    """
    One row per (depth, strategy). Inputs are flat vectors of
    config.input_features with the label written into the first pixels, so
    a net with input_features == width has identical units throughout.
    """
    loss_config = loss_config or LossConfig()
    loss_fn = build_loss(loss_config)
    n_pairs = loss_config.resolve_n_pairs(PROFILE_CLASSES)
    image_shape = (1, 1, config.input_features)

    data_rng = named_rng(seed, "shuffle")
    images = data_rng.random((config.batch,) + image_shape).astype(np.float32)
    labels = data_rng.integers(0, PROFILE_CLASSES, size=config.batch)

    rows: List[ProfileRow] = []
    for depth in config.depths:
        specs = mlp_specs(width=config.width, depth=depth)
        for kind in config.strategies:
            model = Model(specs, image_shape, rng=named_rng(seed, "init", depth))
            emb = LabelEmbedding(PROFILE_CLASSES, image_shape, LabelMode.PIXEL_REPLACE)
            batch = make_batch(images, labels, n_pairs, emb, named_rng(seed, "negatives", depth))
            strategy = build_strategy(model, strategy_config(kind))
            rows_per_pass = batch.batch_size * (1 + batch.n_pairs)

            ledger = ledger_for(model, strategy, rows_per_pass, embedding_grad=bool(emb.params))
            measured = measured_peak_memory(strategy, emb, loss_fn, batch) if config.measure_memory else None
            timing = backward_time(strategy, emb, loss_fn, batch, config.repetitions, config.warmup)

            rows.append(ProfileRow(
                strategy=kind.value,
                depth=depth,
                batch=config.batch,
                batch_rows=rows_per_pass,
                group_size=strategy.group_size,
                param_elems=ledger.param_elems,
                opt_elems=ledger.opt_elems,
                act_elems_peak=ledger.act_elems_peak,
                feedback_elems=ledger.feedback_elems,
                analytic_peak_bytes=ledger.step_peak_bytes,
                measured_peak_bytes=measured.peak_bytes if measured else None,
                rss_bytes=measured.rss_bytes if measured else None,
                backward_ms_median=timing.backward_ms_median,
                backward_ms_iqr=timing.backward_ms_iqr,
                critical_path_ms_median=timing.critical_path_ms_median,
                wall_ms_median=timing.wall_ms_median,
            ))
            logger.info(
                f"depth {depth} {kind.value}: act {ledger.act_elems_peak} elems, "
                f"backward {timing.backward_ms_median:.2f} ms (critical {timing.critical_path_ms_median:.2f} ms)"
            )
    return rows
