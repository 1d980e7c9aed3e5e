"""
Greedy, overlapping-window (DF-O), random-feedback (DF-R) and end-to-end
backprop strategies
"""
import logging
from typing import List, Optional

from distance_forward.config import StrategyConfig, StrategyKind
from distance_forward.core.model import Model, block_backward
from distance_forward.exceptions import InvariantError
from distance_forward.training.base import StrategyMetadata, UpdateStrategy
from distance_forward.training.feedback import FeedbackMatrices

logger = logging.getLogger(__name__)


class GreedyStrategy(UpdateStrategy):
    """Every unit is trained only by its own loss"""

    @classmethod
    def get_metadata(cls) -> StrategyMetadata:
        return StrategyMetadata(
            kind=StrategyKind.GREEDY,
            display_name="Greedy layer-local",
            description="Each unit's loss updates that unit only",
        )

    def _resolve_group_size(self, model, config):
        return 1

    def backward_window(self, top, grad_at_top, caches, need_input_grad):
        return block_backward(self.model, [top], grad_at_top, caches, need_input_grad=need_input_grad)


class _WindowedStrategy(UpdateStrategy):

    def _resolve_group_size(self, model: Model, config: StrategyConfig) -> int:
        g = int(config.group_size)
        if g > model.depth:
            logger.warning(f"group_size {g} exceeds model depth {model.depth}; clamping to {model.depth}")
            g = model.depth
        return g


class OverlappingStrategy(_WindowedStrategy):
    """
    DF-O: the loss at unit j is backpropagated exactly through units
    j-G+1..j. Overlapping windows sum into each unit's gradient.
    """

    @classmethod
    def get_metadata(cls) -> StrategyMetadata:
        return StrategyMetadata(
            kind=StrategyKind.DFO,
            display_name="Overlapping local windows",
            description="Exact gradient of each loss through a window of G units ending at the loss",
        )

    def backward_window(self, top, grad_at_top, caches, need_input_grad):
        return block_backward(self.model, self.window(top), grad_at_top, caches, need_input_grad=need_input_grad)


class RandomFeedbackStrategy(_WindowedStrategy):
    """
    DF-R: the top unit of a window takes its exact gradient; every interior
    unit receives the top gradient projected through a fixed random matrix
    and backpropagates it through itself only.
    """

    def __init__(self, model: Model, config: StrategyConfig, feedback: Optional[FeedbackMatrices] = None):
        super().__init__(model, config)
        if feedback is None:
            feedback = FeedbackMatrices(model, self.group_size, seed=config.feedback_seed,
                                        scale=config.feedback_scale)
        elif feedback.group_size != self.group_size:
            raise InvariantError(
                f"Feedback matrices built for group_size {feedback.group_size}, strategy uses {self.group_size}"
            )
        self.feedback = feedback

    @classmethod
    def get_metadata(cls) -> StrategyMetadata:
        return StrategyMetadata(
            kind=StrategyKind.DFR,
            display_name="Random-feedback local windows",
            description="Exact gradient at the loss unit, fixed random projections for the units below it",
            uses_feedback=True,
        )

    def backward_window(self, top, grad_at_top, caches, need_input_grad):
        units = self.window(top)
        bottom = units[0]
        for u in units:
            if u not in caches:
                raise InvariantError(f"Missing forward cache for unit {u} in window {units}")

        input_grad = self.model.backward_unit(
            top, grad_at_top, caches[top], need_input_grad=need_input_grad and top == bottom
        )
        for i in units[:-1]:
            signal = self.feedback.project(top, i, grad_at_top)
            g = self.model.backward_unit(i, signal, caches[i], need_input_grad=need_input_grad and i == bottom)
            if i == bottom:
                input_grad = g
        return input_grad if need_input_grad else None


class BackpropStrategy(UpdateStrategy):
    """Baseline: one loss on the top unit, backpropagated through every unit"""

    @classmethod
    def get_metadata(cls) -> StrategyMetadata:
        return StrategyMetadata(
            kind=StrategyKind.BP,
            display_name="End-to-end backprop",
            description="Top-unit loss with the exact gradient through the whole network",
            end_to_end=True,
        )

    def _resolve_group_size(self, model, config):
        return model.depth

    def loss_units(self) -> List[int]:
        return [self.model.depth - 1]

    def feeds_embedding(self, top: int) -> bool:
        return True

    def retained_units(self) -> int:
        return self.model.depth

    def backward_window(self, top, grad_at_top, caches, need_input_grad):
        return block_backward(self.model, self.window(top), grad_at_top, caches, need_input_grad=need_input_grad)
