"""
Memory-ledger properties of the profiler
"""
from distance_forward.config import LossConfig, ProfileConfig, StrategyConfig, StrategyKind
from distance_forward.core.model import mlp_specs
from distance_forward.profiling.memory import analytic_memory
from distance_forward.profiling.sweep import profile_sweep
from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata

UNITS = 11
WIDTH = 16
BATCH_ROWS = 8

MEASURED_TOLERANCE = 0.3


class ActivationRatioCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="activation_ratio",
            module="profiler",
            op="analytic_memory",
            description="On 11 uniform units, DF-O with G=2 stores exactly 2/11 of backprop's activations",
            category=CheckCategory.PROFILING,
        )

    def run(self, rng):
        specs = mlp_specs(width=WIDTH, depth=UNITS, batchnorm=False)
        input_shape = (1, 1, WIDTH)
        dfo = analytic_memory(specs, input_shape, StrategyConfig(kind=StrategyKind.DFO, group_size=2), BATCH_ROWS)
        bp = analytic_memory(specs, input_shape, StrategyConfig(kind=StrategyKind.BP), BATCH_ROWS)
        self.require(dfo.act_elems_peak * UNITS == bp.act_elems_peak * 2,
                     f"activation ratio {dfo.act_elems_peak}/{bp.act_elems_peak} is not 2/{UNITS}")
        self.require(dfo.param_elems == bp.param_elems and dfo.opt_elems == 2 * dfo.param_elems,
                     "parameter and optimizer counts must not depend on the strategy")
        return f"{dfo.act_elems_peak} vs {bp.act_elems_peak} elements"


class MeasuredMemoryCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="measured_memory",
            module="profiler",
            op="measured_peak_memory",
            description="Traced peak of one step is within 30% of the analytic peak for every strategy",
            category=CheckCategory.PROFILING,
        )

    def run(self, rng):
        cfg = ProfileConfig(width=256, input_features=256, depths=[4], batch=32, repetitions=1, warmup=0,
                            strategies=list(StrategyKind))
        ratios = []
        for row in profile_sweep(cfg, LossConfig(n_pairs=4), seed=int(rng.integers(1 << 16))):
            if row.measured_peak_bytes is None:
                return "memory tracing unavailable"
            ratio = row.measured_peak_bytes / row.analytic_peak_bytes
            self.require(abs(ratio - 1) <= MEASURED_TOLERANCE,
                         f"{row.strategy}: measured {row.measured_peak_bytes} B vs analytic "
                         f"{row.analytic_peak_bytes} B")
            ratios.append(f"{row.strategy} {ratio:.2f}")
        return ", ".join(ratios)
