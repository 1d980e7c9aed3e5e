"""
Update-locality checks: which units each strategy's losses may touch
"""
import copy
from typing import Set

import numpy as np

from distance_forward.config import LossConfig, LossFamily, StrategyConfig, StrategyKind
from distance_forward.losses.families import build_loss
from distance_forward.training.registry import build_strategy
from distance_forward.training.step import train_step
from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata
from distance_forward.verification.toy import toy_batch, toy_mlp

LR = 1e-2


def _moved_units(before, after) -> Set[int]:
    moved = set()
    for u in range(after.depth):
        for p_before, p_after in zip(before.unit_params(u), after.unit_params(u)):
            if not np.array_equal(p_before.value, p_after.value):
                moved.add(u)
    return moved


class LocalityCheck(BaseCheck):
    """A loss at unit j changes exactly the units of its window (and the embedding only from unit 0)"""

    cases = [
        StrategyConfig(kind=StrategyKind.GREEDY),
        StrategyConfig(kind=StrategyKind.DFO, group_size=2),
        StrategyConfig(kind=StrategyKind.DFR, group_size=2),
    ]

    def get_metadata(self):
        return CheckMetadata(
            name="update_locality",
            module="trainer",
            op="train_step",
            description="Greedy, DF-O and DF-R losses update only the units inside their window",
            category=CheckCategory.LOCALITY,
        )

    def run(self, rng):
        # symba keeps every unit's gradient nonzero
        loss_fn = build_loss(LossConfig(family=LossFamily.SYMBA, n_pairs=3))
        base_model, base_emb = toy_mlp(rng, depth=4)
        batch = toy_batch(base_emb, rng)
        checked = 0
        for cfg in self.cases:
            for j in range(base_model.depth):
                model = copy.deepcopy(base_model)
                emb = copy.deepcopy(base_emb)
                strategy = build_strategy(model, cfg)
                train_step(strategy, emb, loss_fn, batch, lr=LR, active_units=[j])

                expected = set(strategy.window(j))
                moved = _moved_units(base_model, model)
                self.require(moved == expected,
                             f"{cfg.kind.value}: loss at unit {j} moved units {sorted(moved)}, expected {sorted(expected)}")
                emb_moved = not np.array_equal(emb.table.value, base_emb.table.value)
                self.require(emb_moved == (j == 0),
                             f"{cfg.kind.value}: loss at unit {j} {'moved' if emb_moved else 'left'} the embedding")
                checked += 1
        return f"{checked} (strategy, unit) pairs"


class FeedbackImmutabilityCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="feedback_immutable",
            module="trainer",
            op="dfr_update",
            description="Random feedback matrices are bitwise unchanged after 100 DF-R steps",
            category=CheckCategory.LOCALITY,
        )

    def run(self, rng):
        model, emb = toy_mlp(rng, depth=3)
        strategy = build_strategy(model, StrategyConfig(kind=StrategyKind.DFR, group_size=3))
        snapshot = {key: mat.copy() for key, mat in strategy.feedback.items()}
        loss_fn = build_loss(LossConfig(n_pairs=3))
        for _ in range(100):
            train_step(strategy, emb, loss_fn, toy_batch(emb, rng), lr=LR)
        for key, mat in strategy.feedback.items():
            self.require(np.array_equal(mat, snapshot[key]), f"feedback matrix {key} changed during training")
            self.require(not mat.flags.writeable, f"feedback matrix {key} is writeable")
        return f"{len(snapshot)} matrices unchanged"
