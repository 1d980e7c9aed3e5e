"""
Tests for goodness, the loss families and goodness separation
"""
import math

import numpy as np
import pytest

from distance_forward.config import Aggregation, LossConfig, LossFamily
from distance_forward.exceptions import ConfigurationError, DimensionError, InsufficientDataError
from distance_forward.losses.families import DFMarginLoss, FFLoss, SymbaLoss, build_loss
from distance_forward.losses.goodness import (
    GoodnessRecord,
    Polarity,
    df_margin_loss,
    ff_loss,
    goodness,
    goodness_backward,
    goodness_separation,
    margin_loss,
    split_goodness,
    symba_loss,
)


class TestGoodness:
    def test_values(self):
        v = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(goodness(v), [0.0, 1.0, 14.0])

    def test_sums_over_all_non_batch_axes(self, rng):
        v = rng.standard_normal((2, 3, 4, 4))
        np.testing.assert_allclose(goodness(v), (v ** 2).sum(axis=(1, 2, 3)))

    def test_quadratic_scaling(self, rng):
        v = rng.standard_normal((5, 7))
        np.testing.assert_allclose(goodness(3.5 * v), 3.5 ** 2 * goodness(v), rtol=1e-12)

    def test_mean_square(self):
        v = np.array([[1.0, 2.0, 3.0]])
        assert goodness(v, mean_square=True)[0] == pytest.approx(14.0 / 3)

    def test_backward(self, rng):
        v = rng.standard_normal((3, 4))
        grad_g = rng.standard_normal(3)
        np.testing.assert_allclose(goodness_backward(v, grad_g), 2.0 * grad_g[:, None] * v)


class TestFFLoss:
    def test_symmetry(self):
        assert ff_loss(np.array([2.0]), np.array([2.0]), 2.0) == pytest.approx(2 * math.log(2))

    def test_limit(self):
        assert ff_loss(np.array([1e4]), np.array([0.0]), 0.0) == pytest.approx(math.log(2))

    def test_direct_evaluation(self):
        assert ff_loss(np.array([3.0]), np.array([1.0]), 2.0) == pytest.approx(0.6265, abs=1e-4)

    def test_several_negatives_are_averaged(self):
        single = ff_loss(np.array([3.0]), np.array([1.0]), 2.0)
        pair = ff_loss(np.array([3.0]), np.array([[1.0, 1.0]]), 2.0)
        assert pair == pytest.approx(single)


class TestSymbaLoss:
    def test_symmetry(self):
        assert symba_loss(np.array([4.0]), np.array([4.0])) == pytest.approx(math.log(2))

    def test_limit(self):
        assert symba_loss(np.array([1e4]), np.array([0.0])) == pytest.approx(0.0, abs=1e-12)

    def test_direct_evaluation(self):
        assert symba_loss(np.array([5.0]), np.array([2.0])) == pytest.approx(0.04859, abs=1e-5)


class TestDFMarginLoss:
    def test_satisfied_margin(self):
        cfg = LossConfig(margin=1.0, lambda_reg=0.0, n_pairs=2)
        assert df_margin_loss(np.array([5.0]), np.array([[2.0, 3.0]]), cfg) == 0.0

    def test_direct_evaluation(self):
        cfg = LossConfig(margin=1.0, lambda_reg=0.1, n_pairs=3)
        assert df_margin_loss(np.array([2.0]), np.array([[2.0, 5.0, 3.0]]), cfg) == pytest.approx(4.5)

    def test_avg_aggregation(self):
        cfg = LossConfig(margin=1.0, lambda_reg=0.0, n_pairs=3, aggregation=Aggregation.AVG)
        assert df_margin_loss(np.array([2.0]), np.array([[2.0, 5.0, 3.0]]), cfg) == pytest.approx(1.0 + 10.0 / 3 - 2.0)

    def test_single_negative_equals_margin_loss(self, rng):
        g_pos, g_neg = rng.random(8) * 4, rng.random((8, 1)) * 4
        cfg = LossConfig(margin=0.7, lambda_reg=0.3, n_pairs=1)
        assert df_margin_loss(g_pos, g_neg, cfg) == margin_loss(g_pos, g_neg[:, 0], 0.7, 0.3)

    def test_zero_negatives(self):
        with pytest.raises(ConfigurationError):
            df_margin_loss(np.array([1.0]), np.zeros((1, 0)), LossConfig())

    def test_n_pairs_mismatch(self):
        with pytest.raises(ConfigurationError, match="n_pairs=3"):
            df_margin_loss(np.array([1.0]), np.zeros((1, 2)), LossConfig(n_pairs=3))

    def test_monotonicity(self, rng):
        cfg = LossConfig(n_pairs=3)
        g_pos, g_negs = rng.random(4) * 3, rng.random((4, 3)) * 3
        base = df_margin_loss(g_pos, g_negs, cfg)
        assert df_margin_loss(g_pos + 0.5, g_negs, cfg) <= base
        assert df_margin_loss(g_pos, g_negs + 0.5, cfg) >= base

    def test_finite_for_large_goodness(self):
        for family in LossFamily:
            loss = build_loss(LossConfig(family=family, n_pairs=1))
            assert np.isfinite(loss.value(np.array([1e4]), np.array([[0.0]])))
            assert np.isfinite(loss.value(np.array([0.0]), np.array([[1e4]])))


class TestLossGradients:
    def test_max_routes_to_lowest_index_on_ties(self):
        loss = DFMarginLoss(LossConfig(n_pairs=3, lambda_reg=0.0))
        _, d_negs = loss.gradients(np.array([0.0]), np.array([[2.0, 2.0, 1.0]]))
        np.testing.assert_array_equal(d_negs, [[1.0, 0.0, 0.0]])

    def test_hinge_kink_has_zero_subgradient(self):
        loss = DFMarginLoss(LossConfig(margin=1.0, n_pairs=1, lambda_reg=0.0))
        d_pos, d_negs = loss.gradients(np.array([3.0]), np.array([[2.0]]))
        assert d_pos[0] == 0.0 and d_negs[0, 0] == 0.0

    @pytest.mark.parametrize("cls,family", [(FFLoss, LossFamily.FF), (SymbaLoss, LossFamily.SYMBA),
                                            (DFMarginLoss, LossFamily.DF_MARGIN)])
    def test_registry(self, cls, family):
        assert isinstance(build_loss(LossConfig(family=family)), cls)

    @pytest.mark.parametrize("family", list(LossFamily))
    def test_matches_finite_differences(self, family, rng):
        loss = build_loss(LossConfig(family=family, n_pairs=2, aggregation=Aggregation.AVG))
        g_pos, g_negs = rng.random(3) * 3 + 0.5, rng.random((3, 2)) * 3 + 0.5
        d_pos, _ = loss.gradients(g_pos, g_negs)
        h = 1e-6
        for i in range(3):
            up, down = g_pos.copy(), g_pos.copy()
            up[i] += h
            down[i] -= h
            numeric = (loss.value(up, g_negs) - loss.value(down, g_negs)) / (2 * h)
            assert d_pos[i] == pytest.approx(numeric, abs=1e-6)


class TestSplitGoodness:
    def test_zero_weight(self):
        assert split_goodness(np.zeros((3, 5)), np.ones(5), 2) == (0.0, 0.0)

    def test_no_label_slots(self, rng):
        W, x = rng.standard_normal((3, 5)), rng.random(5)
        g_direct, g_split = split_goodness(W, x, 0)
        assert g_direct == pytest.approx(g_split)
        assert g_direct == pytest.approx(float(np.sum((W @ x) ** 2)))

    @pytest.mark.parametrize("label", [0, 1])
    def test_random_instances(self, rng, label):
        W = rng.standard_normal((4, 6))
        x_star = rng.random(6)
        x_star[:2] = 0.0
        x_star[label] = 1.0
        g_direct, g_split = split_goodness(W, x_star, 2)
        assert abs(g_direct - g_split) <= 1e-6 * (1 + g_direct)

    def test_too_many_label_slots(self):
        with pytest.raises(DimensionError):
            split_goodness(np.ones((2, 3)), np.ones(3), 3)


class TestGoodnessSeparation:
    def _records(self, pos, neg):
        return ([GoodnessRecord(np.array([g]), Polarity.POS, 0) for g in pos]
                + [GoodnessRecord(np.array([g]), Polarity.NEG, 1) for g in neg])

    def test_direct_evaluation(self):
        assert goodness_separation(self._records([4.0, 6.0], [1.0, 3.0]), 0) == pytest.approx(3.0)

    def test_identical(self):
        assert goodness_separation(self._records([2.0], [2.0]), 0) == 0.0

    def test_missing_polarity(self):
        with pytest.raises(InsufficientDataError, match="unit 0"):
            goodness_separation(self._records([1.0], []), 0)

    def test_negative_goodness_rejected(self):
        with pytest.raises(ValueError):
            GoodnessRecord(np.array([-1.0]), Polarity.POS, 0)
