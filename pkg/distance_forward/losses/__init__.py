"""
Goodness computation and goodness-based losses
"""
from distance_forward.losses.families import DFMarginLoss, FFLoss, GoodnessLoss, SymbaLoss, build_loss
from distance_forward.losses.goodness import (
    GoodnessRecord,
    Polarity,
    df_margin_loss,
    ff_loss,
    goodness,
    goodness_separation,
    margin_loss,
    split_goodness,
    symba_loss,
)

__all__ = [
    'DFMarginLoss', 'FFLoss', 'GoodnessLoss', 'SymbaLoss', 'build_loss', 'GoodnessRecord',
    'Polarity', 'df_margin_loss', 'ff_loss', 'goodness', 'goodness_separation', 'margin_loss',
    'split_goodness', 'symba_loss',
]
