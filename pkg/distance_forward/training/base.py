"""
Base classes for local update strategies
"""
from abc import ABC, abstractmethod
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from distance_forward.config import StrategyConfig, StrategyKind
from distance_forward.core.model import Model, UnitCache


class StrategyMetadata(BaseModel):
    """Metadata for an update strategy"""
    kind: StrategyKind = Field(..., description="Strategy identifier")
    display_name: str = Field(..., description="Human-readable name")
    description: str = Field(..., description="What gradient each unit receives")
    uses_feedback: bool = Field(default=False, description="Whether fixed random feedback matrices are needed")
    end_to_end: bool = Field(default=False, description="Whether gradients cross every unit boundary")


class UpdateStrategy(ABC):
    """
    Abstract base class for local update strategies.

    A strategy decides which units carry a loss, which units a loss reaches
    (its window), and how the loss gradient travels inside the window.
    Subclasses implement:
    - get_metadata(): Return strategy metadata
    - backward_window(): Accumulate parameter gradients for one loss
    """

    def __init__(self, model: Model, config: StrategyConfig):
        self.model = model
        self.config = config
        self.group_size = self._resolve_group_size(model, config)

    @classmethod
    @abstractmethod
    def get_metadata(cls) -> StrategyMetadata:
        """Return metadata describing this strategy"""
        pass

    @abstractmethod
    def backward_window(
        self,
        top: int,
        grad_at_top: np.ndarray,
        caches: Dict[int, UnitCache],
        need_input_grad: bool,
    ) -> Optional[np.ndarray]:
        """
        Accumulate the gradients of the loss at unit `top` into the Params of
        the units in its window.

        Args:
            top: Unit whose output carries the loss
            grad_at_top: dL/d(output of unit top)
            caches: Forward caches of at least the window's units
            need_input_grad: Return dL/d(window input) when True

        Returns:
            Gradient w.r.t. the window input, or None
        """
        pass

    def _resolve_group_size(self, model: Model, config: StrategyConfig) -> int:
        return int(config.group_size)

    def window(self, top: int) -> List[int]:
        """Ascending units updated by the loss at unit `top`"""
        return list(range(max(0, top - self.group_size + 1), top + 1))

    def loss_units(self) -> List[int]:
        """Units whose output carries a goodness loss"""
        return list(range(self.model.depth))

    def feeds_embedding(self, top: int) -> bool:
        """Whether the loss at unit `top` also updates the label embedding"""
        return top == 0

    def retained_units(self) -> int:
        """Caches of this many units below the current one must survive"""
        return self.group_size - 1
