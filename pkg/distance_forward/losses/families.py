"""
Loss families with analytic gradients w.r.t. positive / negative goodness
"""
import logging
from abc import ABC, abstractmethod
from typing import Dict, Tuple, Type

import numpy as np

from distance_forward.config import Aggregation, LossConfig, LossFamily
from distance_forward.losses.goodness import (
    aggregate_negatives,
    df_margin_loss,
    ff_loss,
    sigmoid,
    symba_loss,
)

logger = logging.getLogger(__name__)

Gradients = Tuple[np.ndarray, np.ndarray]


class GoodnessLoss(ABC):
    """
    A scalar loss over positive goodness (B,) and negative goodness (B, N).

    gradients() returns dL/dg_pos (B,) and dL/dg_negs (B, N).
    """

    family: LossFamily

    def __init__(self, cfg: LossConfig):
        self.cfg = cfg

    @abstractmethod
    def value(self, g_pos: np.ndarray, g_negs: np.ndarray) -> float:
        pass

    @abstractmethod
    def gradients(self, g_pos: np.ndarray, g_negs: np.ndarray) -> Gradients:
        pass


class FFLoss(GoodnessLoss):
    family = LossFamily.FF

    def value(self, g_pos, g_negs):
        return ff_loss(g_pos, g_negs, self.cfg.theta)

    def gradients(self, g_pos, g_negs):
        b, n = g_negs.shape
        theta = self.cfg.theta
        d_pos = -sigmoid(theta - g_pos) / b
        d_negs = sigmoid(g_negs - theta) / (b * n)
        return d_pos, d_negs


class SymbaLoss(GoodnessLoss):
    family = LossFamily.SYMBA

    def value(self, g_pos, g_negs):
        return symba_loss(g_pos, g_negs)

    def gradients(self, g_pos, g_negs):
        b, n = g_negs.shape
        s = sigmoid(g_negs - g_pos[:, None]) / (b * n)
        return -s.sum(axis=1), s


class DFMarginLoss(GoodnessLoss):
    family = LossFamily.DF_MARGIN

    def value(self, g_pos, g_negs):
        return df_margin_loss(g_pos, g_negs, self.cfg)

    def gradients(self, g_pos, g_negs):
        b, n = g_negs.shape
        agg = aggregate_negatives(g_negs, self.cfg.aggregation)
        # subgradient 0 at the hinge kink
        active = (self.cfg.margin + agg - g_pos > 0).astype(np.float64)
        d_agg = (active + self.cfg.lambda_reg) / b
        d_pos = -active / b
        d_negs = np.zeros((b, n), dtype=np.float64)
        if self.cfg.aggregation == Aggregation.MAX:
            # argmax picks the lowest index on ties
            d_negs[np.arange(b), np.argmax(g_negs, axis=1)] = d_agg
        else:
            d_negs[:] = (d_agg / n)[:, None]
        return d_pos, d_negs


_LOSS_FAMILIES: Dict[LossFamily, Type[GoodnessLoss]] = {}


def register_loss(cls: Type[GoodnessLoss]) -> Type[GoodnessLoss]:
    if cls.family in _LOSS_FAMILIES:
        logger.warning(f"Loss family '{cls.family.value}' already registered, overwriting")
    _LOSS_FAMILIES[cls.family] = cls
    return cls


for _cls in (FFLoss, SymbaLoss, DFMarginLoss):
    register_loss(_cls)


def build_loss(cfg: LossConfig) -> GoodnessLoss:
    """Instantiate the loss family named by cfg"""
    return _LOSS_FAMILIES[LossFamily(cfg.family)](cfg)
