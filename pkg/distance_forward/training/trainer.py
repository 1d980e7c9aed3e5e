"""
Training loop and single-batch update entry points
"""
import logging
import math
import time
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from distance_forward.config import DecodeConfig, LossConfig, StrategyConfig, StrategyKind, TrainConfig
from distance_forward.core.model import Model
from distance_forward.core.params import cosine_lr
from distance_forward.data.dataset import Dataset
from distance_forward.data.normalize import NormalizationStats
from distance_forward.data.transforms import random_crop_flip
from distance_forward.exceptions import ConfigurationError
from distance_forward.losses.families import build_loss
from distance_forward.samples.builder import SampleBatch, make_batch
from distance_forward.samples.embedding import LabelEmbedding
from distance_forward.seeding import generator_state, named_rng, restore_generator
from distance_forward.training.base import UpdateStrategy
from distance_forward.training.feedback import FeedbackMatrices
from distance_forward.training.registry import build_strategy
from distance_forward.training.step import StepResult, train_step

logger = logging.getLogger(__name__)

StepHook = Callable[[int, StepResult], None]
TRAIN_STREAMS = ("shuffle", "negatives", "noise", "augment")


class EpochRecord(BaseModel):
    """One row of the training metrics"""
    epoch: int
    lr: float = Field(..., description="Learning rate of the last step in the epoch")
    seconds: float
    backward_seconds: float
    unit_losses: List[Optional[float]] = Field(..., description="Mean loss per unit; None where no loss is applied")
    separation: List[float] = Field(..., description="Mean positive minus mean negative goodness per unit")
    test_accuracy: Optional[float] = None


class TrainingReport(BaseModel):
    strategy: StrategyKind
    group_size: int
    n_pairs: int
    epochs: List[EpochRecord] = Field(default_factory=list)

    @property
    def final_accuracy(self) -> Optional[float]:
        for record in reversed(self.epochs):
            if record.test_accuracy is not None:
                return record.test_accuracy
        return None

    def rows(self) -> List[Dict]:
        """Flat per-epoch rows for the metrics CSV"""
        rows = []
        for r in self.epochs:
            row = {
                "epoch": r.epoch,
                "strategy": self.strategy.value,
                "group_size": self.group_size,
                "n_pairs": self.n_pairs,
                "lr": r.lr,
                "seconds": r.seconds,
                "backward_seconds": r.backward_seconds,
                "test_accuracy": r.test_accuracy,
            }
            for u, loss in enumerate(r.unit_losses):
                row[f"loss_unit{u}"] = loss
            for u, sep in enumerate(r.separation):
                row[f"separation_unit{u}"] = sep
            rows.append(row)
        return rows


class Trainer:
    """
    Runs shuffled mini-batch epochs of local training.

    Every random draw comes from a named sub-stream of config.seed, so a
    single-threaded run is bitwise reproducible.
    """

    def __init__(
        self,
        model: Model,
        emb: LabelEmbedding,
        config: TrainConfig,
        augment: bool = False,
        feedback: Optional[FeedbackMatrices] = None,
        step_hook: Optional[StepHook] = None,
        stats: Optional[NormalizationStats] = None,
    ):
        self.model = model
        self.emb = emb
        self.config = config
        self.augment = augment
        self.stats = stats
        self.step_hook = step_hook
        kwargs = {"feedback": feedback} if feedback is not None else {}
        self.strategy: UpdateStrategy = build_strategy(model, config.strategy, **kwargs)
        self.n_pairs = config.loss.resolve_n_pairs(emb.num_classes)
        self.loss_fn = build_loss(config.loss)

        self.rngs: Dict[str, np.random.Generator] = {name: named_rng(config.seed, name) for name in TRAIN_STREAMS}

    def rng_state(self) -> Dict[str, Any]:
        """Seed plus the current position of every training stream, JSON-serializable"""
        return {"seed": self.config.seed,
                "streams": {name: generator_state(rng) for name, rng in self.rngs.items()}}

    def restore_rng_state(self, state: Dict[str, Any]) -> None:
        """Resume every training stream from a state written by rng_state()"""
        streams = state.get("streams", {})
        missing = [name for name in TRAIN_STREAMS if name not in streams]
        if missing:
            raise ConfigurationError(f"rng state lacks streams {missing}")
        try:
            self.rngs = {name: restore_generator(streams[name]) for name in TRAIN_STREAMS}
        except (TypeError, ValueError, KeyError) as e:
            raise ConfigurationError(f"unusable rng state: {e}") from e

    def fit(self, dataset: Dataset, eval_dataset: Optional[Dataset] = None,
            decode_config: Optional[DecodeConfig] = None) -> TrainingReport:
        """
        Train for config.epochs epochs.

        Args:
            dataset: Normalized training split
            eval_dataset: Optional normalized test split for per-epoch accuracy
            decode_config: Units to decode from during evaluation

        Returns:
            TrainingReport with one record per epoch
        """
        if self.augment and dataset.normalized and self.stats is None:
            raise ConfigurationError("augmenting a normalized split needs its normalization stats for the pad value")
        cfg = self.config
        report = TrainingReport(
            strategy=cfg.strategy.kind, group_size=self.strategy.group_size, n_pairs=self.n_pairs
        )
        if cfg.epochs == 0:
            logger.info("epochs = 0, nothing to train")
            return report

        n = len(dataset)
        steps_per_epoch = math.ceil(n / cfg.batch_size)
        total_steps = cfg.epochs * steps_per_epoch
        depth = self.model.depth
        loss_units = self.strategy.loss_units()
        logger.info(
            f"Training {cfg.strategy.kind.value} (G={self.strategy.group_size}, N={self.n_pairs}) "
            f"on {n} samples, {depth} units, {total_steps} steps"
        )

        step = 0
        for epoch in range(cfg.epochs):
            start = time.perf_counter()
            loss_sum = np.zeros(depth)
            pos_sum = np.zeros(depth)
            neg_sum = np.zeros(depth)
            backward_seconds = 0.0
            batches = 0
            lr = cfg.base_lr

            order = self.rngs["shuffle"].permutation(n)
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                batch = self._make_batch(dataset, idx)
                lr = cosine_lr(cfg.base_lr, step, total_steps)
                result = train_step(
                    self.strategy, self.emb, self.loss_fn, batch, lr,
                    grad_noise_sigma=cfg.effective_grad_noise_sigma, noise_rng=self.rngs["noise"],
                )
                if self.step_hook is not None:
                    self.step_hook(step, result)
                loss_sum[loss_units] += result.losses[loss_units]
                pos_sum += result.pos_goodness
                neg_sum += result.neg_goodness
                backward_seconds += result.backward_seconds
                batches += 1
                step += 1

            unit_losses: List[Optional[float]] = [None] * depth
            for u in loss_units:
                unit_losses[u] = float(loss_sum[u] / batches)
            record = EpochRecord(
                epoch=epoch + 1,
                lr=lr,
                seconds=time.perf_counter() - start,
                backward_seconds=backward_seconds,
                unit_losses=unit_losses,
                separation=((pos_sum - neg_sum) / batches).tolist(),
            )
            if eval_dataset is not None and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
                record.test_accuracy = self._evaluate(eval_dataset, decode_config)
            report.epochs.append(record)
            self._log_epoch(record)

        return report

    def _make_batch(self, dataset: Dataset, idx: np.ndarray) -> SampleBatch:
        images = dataset.images[idx]
        if self.augment:
            fill = self.stats.black() if dataset.normalized else None
            images = random_crop_flip(images, self.rngs["augment"], fill=fill)
        images = images.astype(self.model.dtype, copy=False)
        return make_batch(images, dataset.labels[idx], self.n_pairs, self.emb, self.rngs["negatives"])

    def _evaluate(self, eval_dataset: Dataset, decode_config: Optional[DecodeConfig]) -> float:
        from distance_forward.evaluation.decode import accuracy

        decode_config = decode_config or DecodeConfig()
        subset = eval_dataset.subset(limit=self.config.eval_samples)
        layer_set = decode_config.resolve(self.model.depth, self.config.strategy.kind)
        return accuracy(self.model, self.emb, subset, layer_set, mean_square=self.config.loss.mean_goodness)

    def _log_epoch(self, record: EpochRecord) -> None:
        losses = ", ".join("-" if v is None else f"{v:.4f}" for v in record.unit_losses)
        seps = ", ".join(f"{v:.3f}" for v in record.separation)
        acc = "" if record.test_accuracy is None else f", test acc {record.test_accuracy:.4f}"
        logger.info(
            f"epoch {record.epoch}: loss [{losses}], separation [{seps}], lr {record.lr:.2e}, "
            f"{record.seconds:.1f}s{acc}"
        )


def train(
    model: Model,
    emb: LabelEmbedding,
    dataset: Dataset,
    config: TrainConfig,
    eval_dataset: Optional[Dataset] = None,
    decode_config: Optional[DecodeConfig] = None,
    augment: bool = False,
    step_hook: Optional[StepHook] = None,
    stats: Optional[NormalizationStats] = None,
) -> TrainingReport:
    """Train model and embedding on dataset; see Trainer.fit"""
    trainer = Trainer(model, emb, config, augment=augment, step_hook=step_hook, stats=stats)
    return trainer.fit(dataset, eval_dataset, decode_config)


def _single_update(model: Model, emb: LabelEmbedding, batch: SampleBatch, loss_cfg: LossConfig,
                   strategy_cfg: StrategyConfig, lr: float, **kwargs) -> np.ndarray:
    strategy = build_strategy(model, strategy_cfg, **kwargs)
    return train_step(strategy, emb, build_loss(loss_cfg), batch, lr).losses


def greedy_update(model: Model, emb: LabelEmbedding, batch: SampleBatch, loss_cfg: LossConfig,
                  lr: float = 1e-3) -> np.ndarray:
    """One greedy update; returns the per-unit losses"""
    return _single_update(model, emb, batch, loss_cfg, StrategyConfig(kind=StrategyKind.GREEDY), lr)


def dfo_update(model: Model, emb: LabelEmbedding, batch: SampleBatch, loss_cfg: LossConfig,
               group_size: int = 2, lr: float = 1e-3) -> np.ndarray:
    """One DF-O update with windows of group_size units; returns the per-unit losses"""
    cfg = StrategyConfig(kind=StrategyKind.DFO, group_size=group_size)
    return _single_update(model, emb, batch, loss_cfg, cfg, lr)


def dfr_update(model: Model, emb: LabelEmbedding, batch: SampleBatch, loss_cfg: LossConfig,
               feedback: FeedbackMatrices, lr: float = 1e-3) -> np.ndarray:
    """One DF-R update using the given fixed feedback matrices; returns the per-unit losses"""
    cfg = StrategyConfig(kind=StrategyKind.DFR, group_size=feedback.group_size)
    return _single_update(model, emb, batch, loss_cfg, cfg, lr, feedback=feedback)
