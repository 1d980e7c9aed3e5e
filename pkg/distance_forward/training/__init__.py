"""
Local update strategies and the training loop
"""
from distance_forward.training.base import StrategyMetadata, UpdateStrategy
from distance_forward.training.feedback import FeedbackMatrices
from distance_forward.training.noise import grad_noise_sigma, inject_gradient_noise
from distance_forward.training.registry import build_strategy, get_registry, register_strategy
from distance_forward.training.step import StepResult, compute_gradients, train_step
from distance_forward.training.strategies import (
    BackpropStrategy,
    GreedyStrategy,
    OverlappingStrategy,
    RandomFeedbackStrategy,
)
from distance_forward.training.trainer import (
    EpochRecord,
    Trainer,
    TrainingReport,
    dfo_update,
    dfr_update,
    greedy_update,
    train,
)

__all__ = [
    'StrategyMetadata', 'UpdateStrategy', 'FeedbackMatrices', 'grad_noise_sigma',
    'inject_gradient_noise', 'build_strategy', 'get_registry', 'register_strategy', 'StepResult',
    'compute_gradients', 'train_step', 'BackpropStrategy', 'GreedyStrategy', 'OverlappingStrategy',
    'RandomFeedbackStrategy', 'EpochRecord', 'Trainer', 'TrainingReport', 'dfo_update', 'dfr_update',
    'greedy_update', 'train',
]
