"""
Optimizer and learnable-embedding checks
"""
import numpy as np

from distance_forward.config import LossConfig, StrategyConfig, StrategyKind
from distance_forward.core.params import Param, adam_step
from distance_forward.losses.families import build_loss
from distance_forward.training.registry import build_strategy
from distance_forward.training.step import compute_gradients
from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata
from distance_forward.verification.toy import toy_batch, toy_mlp

STEPS = 20


class ZeroGradientAdamCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="adam_zero_gradient_noop",
            module="tensor-core",
            op="adam_step",
            description="Adam steps with a zero gradient leave value and moments untouched, even after real updates",
            category=CheckCategory.GRADIENT,
        )

    def run(self, rng):
        fresh = Param("fresh", rng.standard_normal((3, 4)))
        start = fresh.value.copy()
        for _ in range(STEPS):
            adam_step(fresh, 1e-2)
        self.require(np.array_equal(fresh.value, start), "a parameter that never saw a gradient moved")

        warm = Param("warm", rng.standard_normal(5))
        for _ in range(3):
            warm.grad[...] = rng.standard_normal(5)
            adam_step(warm, 1e-2)
        value, m, v = warm.value.copy(), warm.adam_m.copy(), warm.adam_v.copy()
        for _ in range(STEPS):
            adam_step(warm, 1e-2)
        self.require(np.array_equal(warm.value, value), "momentum moved a parameter with zero gradient")
        self.require(np.array_equal(warm.adam_m, m) and np.array_equal(warm.adam_v, v),
                     "zero-gradient steps decayed the Adam moments")
        return f"{STEPS} zero-gradient steps"


class EmbeddingGradientCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="embedding_gradient",
            module="sample-builder",
            op="accumulate_grad",
            description="One DF-margin step gives the learnable label planes a nonzero gradient",
            category=CheckCategory.GRADIENT,
        )

    def run(self, rng):
        loss_fn = build_loss(LossConfig(n_pairs=3, margin=50.0))
        for kind in (StrategyKind.GREEDY, StrategyKind.DFO, StrategyKind.DFR, StrategyKind.BP):
            model, emb = toy_mlp(rng)
            batch = toy_batch(emb, rng)
            strategy = build_strategy(model, StrategyConfig(kind=kind))
            emb.table.zero_grad()
            compute_gradients(strategy, emb, loss_fn, batch)
            self.require(np.any(emb.table.grad != 0), f"{kind.value}: embedding gradient is all zero")
            touched = {int(y) for y in np.concatenate([batch.true_labels, batch.neg_labels.reshape(-1)])}
            for label in range(emb.num_classes):
                if label not in touched:
                    self.require(not np.any(emb.table.grad[label]), f"{kind.value}: unused label {label} got a gradient")
        return "greedy, dfo, dfr and bp"
