"""
Training memory and backward-time accounting
"""
from distance_forward.profiling.memory import (
    MeasuredMemory,
    MemoryLedger,
    activation_peak,
    analytic_memory,
    ledger_for,
    measured_peak_memory,
    step_peak_bytes,
)
from distance_forward.profiling.sweep import ProfileRow, profile_sweep
from distance_forward.profiling.timing import ScalingFit, TimingStats, backward_time, fit_depth_scaling

__all__ = [
    'MeasuredMemory', 'MemoryLedger', 'activation_peak', 'analytic_memory', 'ledger_for',
    'measured_peak_memory', 'step_peak_bytes', 'ProfileRow', 'profile_sweep', 'ScalingFit', 'TimingStats',
    'backward_time', 'fit_depth_scaling',
]
