"""
Error types raised across the library.

The CLI maps these onto exit codes (see distance_forward.cli).
"""


class DistanceForwardError(Exception):
    """Base class for every library error"""


class DimensionError(DistanceForwardError, ValueError):
    """Tensor shapes are incompatible"""


class ConfigurationError(DistanceForwardError, ValueError):
    """A configuration value or combination is invalid"""


class InvariantError(DistanceForwardError, RuntimeError):
    """An internal invariant was violated (e.g. a missing forward cache)"""


class NonFiniteGradientError(DistanceForwardError, FloatingPointError):
    """A gradient contained NaN or Inf when an optimizer step was attempted"""


class InsufficientDataError(DistanceForwardError, ValueError):
    """Not enough data to compute the requested statistic"""


class DatasetFormatError(DistanceForwardError, ValueError):
    """A dataset file could not be parsed"""


class CheckpointVersionError(DistanceForwardError, ValueError):
    """A checkpoint was written with an unsupported format version"""


class DivergenceError(DistanceForwardError, FloatingPointError):
    """Training produced a non-finite loss"""


class VerificationError(DistanceForwardError, AssertionError):
    """A property check of the verification suite failed"""

    def __init__(self, module: str, op: str, message: str):
        self.module = module
        self.op = op
        super().__init__(f"[{module}/{op}] {message}")


class LabelRangeError(DistanceForwardError, ValueError):
    """A class label lies outside [0, K)"""
