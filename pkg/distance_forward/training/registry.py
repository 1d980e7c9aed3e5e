"""
Strategy registry
"""
import logging
from typing import Dict, List, Optional, Type

from distance_forward.config import StrategyConfig, StrategyKind
from distance_forward.core.model import Model
from distance_forward.exceptions import ConfigurationError
from distance_forward.training.base import StrategyMetadata, UpdateStrategy
from distance_forward.training.strategies import (
    BackpropStrategy,
    GreedyStrategy,
    OverlappingStrategy,
    RandomFeedbackStrategy,
)

logger = logging.getLogger(__name__)


class StrategyRegistry:
    """
    Central registry of update strategies, keyed by StrategyKind.
    """

    def __init__(self):
        self._strategies: Dict[StrategyKind, Type[UpdateStrategy]] = {}
        self._metadata_cache: Dict[StrategyKind, StrategyMetadata] = {}

    def register(self, strategy_cls: Type[UpdateStrategy]) -> None:
        metadata = strategy_cls.get_metadata()
        if metadata.kind in self._strategies:
            logger.warning(f"Strategy '{metadata.kind.value}' already registered, overwriting")
        self._strategies[metadata.kind] = strategy_cls
        self._metadata_cache[metadata.kind] = metadata
        logger.debug(f"Registered strategy: {metadata.kind.value}")

    def get_strategy(self, kind: StrategyKind) -> Optional[Type[UpdateStrategy]]:
        return self._strategies.get(StrategyKind(kind))

    def get_metadata(self, kind: StrategyKind) -> Optional[StrategyMetadata]:
        return self._metadata_cache.get(StrategyKind(kind))

    def list_strategies(self) -> List[StrategyMetadata]:
        return list(self._metadata_cache.values())

    def build(self, model: Model, config: StrategyConfig, **kwargs) -> UpdateStrategy:
        """
        Instantiate the strategy named by config for model.

        Args:
            model: Model to train
            config: Strategy section of the run config
            **kwargs: Extra constructor arguments (e.g. prebuilt feedback matrices)
        """
        strategy_cls = self.get_strategy(config.kind)
        if strategy_cls is None:
            raise ConfigurationError(f"Unknown strategy '{config.kind}'")
        return strategy_cls(model, config, **kwargs)


_global_registry: Optional[StrategyRegistry] = None


def get_registry() -> StrategyRegistry:
    """Get the global strategy registry"""
    global _global_registry
    if _global_registry is None:
        _global_registry = StrategyRegistry()
        for cls in (GreedyStrategy, OverlappingStrategy, RandomFeedbackStrategy, BackpropStrategy):
            _global_registry.register(cls)
    return _global_registry


def register_strategy(strategy_cls: Type[UpdateStrategy]) -> None:
    """Register a strategy in the global registry"""
    get_registry().register(strategy_cls)


def build_strategy(model: Model, config: StrategyConfig, **kwargs) -> UpdateStrategy:
    return get_registry().build(model, config, **kwargs)
