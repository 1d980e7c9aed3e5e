"""
Tests for the memory ledger, backward timing and the profiling sweep
"""
import numpy as np
import pytest

from distance_forward.config import LossConfig, ProfileConfig, StrategyConfig, StrategyKind
from distance_forward.core.model import mlp_specs
from distance_forward.exceptions import InsufficientDataError
from distance_forward.losses.families import build_loss
from distance_forward.profiling.memory import analytic_memory, measured_peak_memory
from distance_forward.profiling.sweep import profile_sweep
from distance_forward.profiling.timing import backward_time, fit_depth_scaling
from distance_forward.training.registry import build_strategy

UNIFORM = mlp_specs(width=16, depth=11, batchnorm=False)
INPUT = (1, 1, 16)


class TestAnalyticMemory:
    def test_activation_ratio(self):
        dfo = analytic_memory(UNIFORM, INPUT, StrategyConfig(kind=StrategyKind.DFO, group_size=2), 8)
        bp = analytic_memory(UNIFORM, INPUT, StrategyConfig(kind=StrategyKind.BP), 8)
        assert dfo.act_elems_peak / bp.act_elems_peak == pytest.approx(2 / 11)

    def test_params_independent_of_strategy(self):
        ledgers = [analytic_memory(UNIFORM, INPUT, StrategyConfig(kind=kind), 8) for kind in StrategyKind]
        assert len({l.param_elems for l in ledgers}) == 1
        assert all(l.opt_elems == 2 * l.param_elems for l in ledgers)
        assert all(l.grad_elems == l.param_elems for l in ledgers)

    def test_depth_one_is_identical(self):
        specs = mlp_specs(width=16, depth=1, batchnorm=False)
        local = analytic_memory(specs, INPUT, StrategyConfig(kind=StrategyKind.DFO, group_size=2), 8)
        bp = analytic_memory(specs, INPUT, StrategyConfig(kind=StrategyKind.BP), 8)
        assert local.act_elems_peak == bp.act_elems_peak
        assert local.group_size == 1

    def test_feedback_counted(self):
        dfr = analytic_memory(UNIFORM, INPUT, StrategyConfig(kind=StrategyKind.DFR, group_size=2), 8)
        assert dfr.feedback_elems == 10 * 16 * 16
        assert dfr.total_elems > analytic_memory(UNIFORM, INPUT, StrategyConfig(), 8).total_elems

    def test_bytes_follow_dtype(self):
        ledger = analytic_memory(UNIFORM, INPUT, StrategyConfig(), 8)
        assert ledger.dtype_bytes == 4
        assert ledger.total_bytes == 4 * ledger.total_elems


class TestMeasuredMemory:
    def test_supported(self, mlp, batch):
        model, emb = mlp
        strategy = build_strategy(model, StrategyConfig())
        measured = measured_peak_memory(strategy, emb, build_loss(LossConfig(n_pairs=batch.n_pairs)), batch)
        assert measured.supported
        assert measured.peak_bytes > 0


class TestTiming:
    def test_stats(self, mlp, batch):
        model, emb = mlp
        strategy = build_strategy(model, StrategyConfig())
        stats = backward_time(strategy, emb, build_loss(LossConfig(n_pairs=batch.n_pairs)), batch,
                              repetitions=3, warmup=1)
        assert stats.repetitions == 3
        assert 0 < stats.critical_path_ms_median <= stats.backward_ms_median <= stats.wall_ms_median
        assert all(not np.any(p.grad) for p in model.params)

    def test_invalid_repetitions(self, mlp, batch):
        model, emb = mlp
        with pytest.raises(ValueError):
            backward_time(build_strategy(model, StrategyConfig()), emb, build_loss(LossConfig()), batch,
                          repetitions=0)

    def test_fit_line(self):
        fit = fit_depth_scaling([1, 2, 3, 4], [3.0, 5.0, 7.0, 9.0])
        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(1.0)
        assert fit.r_squared == pytest.approx(1.0)

    def test_fit_needs_two_points(self):
        with pytest.raises(InsufficientDataError):
            fit_depth_scaling([5], [1.0])


class TestProfileSweep:
    def test_rows(self):
        cfg = ProfileConfig(width=12, input_features=12, depths=[1, 3], batch=4, repetitions=2, warmup=0,
                            strategies=[StrategyKind.BP, StrategyKind.DFO])
        rows = profile_sweep(cfg, LossConfig(n_pairs=2))
        assert [(r.depth, r.strategy) for r in rows] == [(1, "bp"), (1, "dfo"), (3, "bp"), (3, "dfo")]
        assert all(r.batch_rows == 4 * 3 for r in rows)
        deep_bp, deep_dfo = rows[2], rows[3]
        assert deep_dfo.act_elems_peak < deep_bp.act_elems_peak
        assert deep_dfo.param_elems == deep_bp.param_elems
        assert all(r.measured_peak_bytes is not None for r in rows)

    def test_without_memory_measurement(self):
        cfg = ProfileConfig(width=8, input_features=12, depths=[2], batch=2, repetitions=1, warmup=0,
                            strategies=[StrategyKind.GREEDY], measure_memory=False)
        rows = profile_sweep(cfg, LossConfig(n_pairs=1))
        assert rows[0].measured_peak_bytes is None
        assert rows[0].group_size == 1


class TestStepPeak:
    def test_measured_within_tolerance(self):
        cfg = ProfileConfig(width=256, input_features=256, depths=[4], batch=32, repetitions=1, warmup=0,
                            strategies=[StrategyKind.BP, StrategyKind.GREEDY, StrategyKind.DFO, StrategyKind.DFR])
        rows = profile_sweep(cfg, LossConfig(n_pairs=4))
        for row in rows:
            ratio = row.measured_peak_bytes / row.analytic_peak_bytes
            assert abs(ratio - 1) <= 0.3, f"{row.strategy}: {ratio:.2f}"

    def test_includes_retained_caches(self):
        for kind in StrategyKind:
            ledger = analytic_memory(UNIFORM, INPUT, StrategyConfig(kind=kind), 8)
            assert ledger.step_peak_bytes > ledger.act_elems_peak * ledger.dtype_bytes // 2

    def test_backprop_peak_grows_with_depth(self):
        shallow = analytic_memory(mlp_specs(width=16, depth=2, batchnorm=False), INPUT, StrategyConfig(kind=StrategyKind.BP), 8)
        deep = analytic_memory(UNIFORM, INPUT, StrategyConfig(kind=StrategyKind.BP), 8)
        local = analytic_memory(UNIFORM, INPUT, StrategyConfig(kind=StrategyKind.DFO, group_size=2), 8)
        assert deep.step_peak_bytes > shallow.step_peak_bytes
        assert local.step_peak_bytes < deep.step_peak_bytes

    def test_eleven_units_local_uses_under_half(self):
        cfg = ProfileConfig(width=128, input_features=128, depths=[11], batch=16, repetitions=1, warmup=0,
                            strategies=[StrategyKind.BP, StrategyKind.DFO])
        bp, dfo = profile_sweep(cfg, LossConfig(n_pairs=4))
        assert dfo.measured_peak_bytes <= 0.5 * bp.measured_peak_bytes
