"""
Built-in verification checks, in run order
"""
from typing import List

from distance_forward.verification.base import BaseCheck
from distance_forward.verification.checks.evaluation import (
    DecodeConsistencyCheck,
    MonotoneDecodeCheck,
    NoiseOperatorCheck,
    QuantizationCheck,
)
from distance_forward.verification.checks.io import (
    CheckpointRoundTripCheck,
    DatasetFormatRoundTripCheck,
    TrainOnlyStatisticsCheck,
)
from distance_forward.verification.checks.locality import FeedbackImmutabilityCheck, LocalityCheck
from distance_forward.verification.checks.losses import (
    GoodnessScalingCheck,
    LargeGoodnessCheck,
    LossGradientCheck,
    MarginSatisfiedCheck,
    MaxAggregationMonotonicityCheck,
    PositiveMonotonicityCheck,
    SinglePairIdentityCheck,
    SplitGoodnessCheck,
)
from distance_forward.verification.checks.numeric import (
    BlockGradientCheck,
    ForwardDeterminismCheck,
    LayerGradientCheck,
    OverlapOracleCheck,
)
from distance_forward.verification.checks.profiling import ActivationRatioCheck, MeasuredMemoryCheck
from distance_forward.verification.checks.samples import LabelRegionCheck
from distance_forward.verification.checks.training import EmbeddingGradientCheck, ZeroGradientAdamCheck


def builtin_checks() -> List[BaseCheck]:
    return [
        LayerGradientCheck(),
        BlockGradientCheck(),
        ForwardDeterminismCheck(),
        ZeroGradientAdamCheck(),
        LossGradientCheck(),
        GoodnessScalingCheck(),
        SplitGoodnessCheck(),
        SinglePairIdentityCheck(),
        MaxAggregationMonotonicityCheck(),
        MarginSatisfiedCheck(),
        PositiveMonotonicityCheck(),
        LargeGoodnessCheck(),
        OverlapOracleCheck(),
        LocalityCheck(),
        FeedbackImmutabilityCheck(),
        LabelRegionCheck(),
        EmbeddingGradientCheck(),
        QuantizationCheck(),
        NoiseOperatorCheck(),
        DecodeConsistencyCheck(),
        MonotoneDecodeCheck(),
        ActivationRatioCheck(),
        MeasuredMemoryCheck(),
        CheckpointRoundTripCheck(),
        DatasetFormatRoundTripCheck(),
        TrainOnlyStatisticsCheck(),
    ]
