"""
Goodness and loss-family property checks
"""
import numpy as np

from distance_forward.config import Aggregation, LossConfig, LossFamily
from distance_forward.losses.families import build_loss
from distance_forward.losses.goodness import df_margin_loss, goodness, margin_loss, split_goodness
from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata

INSTANCES = 1000


class SplitGoodnessCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="split_goodness",
            module="goodness-loss",
            op="split_goodness",
            description="Direct and weight-split goodness agree within 1e-6 * (1 + g)",
            category=CheckCategory.LOSS,
        )

    def run(self, rng):
        worst = 0.0
        for _ in range(INSTANCES):
            k = int(rng.integers(2, 11))
            m = k + int(rng.integers(1, 11))
            n = int(rng.integers(1, 9))
            W = rng.standard_normal((n, m))
            x_star = rng.random(m)
            x_star[:k] = 0.0
            x_star[int(rng.integers(0, k))] = 1.0
            g_direct, g_split = split_goodness(W, x_star, k)
            gap = abs(g_direct - g_split) / (1.0 + abs(g_direct))
            self.require(gap <= 1e-6, f"split goodness differs by {gap:.2e} (K={k}, m={m}, n={n})")
            worst = max(worst, gap)
        return f"{INSTANCES} instances, worst scaled gap {worst:.2e}"


class SinglePairIdentityCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="single_pair_identity",
            module="goodness-loss",
            op="df_margin_loss",
            description="With one negative the N-pair loss equals the single-negative margin loss exactly",
            category=CheckCategory.LOSS,
        )

    def run(self, rng):
        for _ in range(INSTANCES):
            b = int(rng.integers(1, 17))
            g_pos = rng.random(b) * 5.0
            g_neg = rng.random((b, 1)) * 5.0
            margin = float(rng.random() * 2.0)
            lam = float(rng.random())
            expected = margin_loss(g_pos, g_neg[:, 0], margin, lam)
            for aggregation in Aggregation:
                cfg = LossConfig(margin=margin, lambda_reg=lam, n_pairs=1, aggregation=aggregation)
                got = df_margin_loss(g_pos, g_neg, cfg)
                self.require(got == expected, f"{aggregation.value}: {got!r} != {expected!r}")
        return f"{INSTANCES} instances, both aggregations"


class MaxAggregationMonotonicityCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="max_aggregation_monotonic",
            module="goodness-loss",
            op="df_margin_loss",
            description="With max aggregation, raising the hardest negative never lowers the loss",
            category=CheckCategory.LOSS,
        )

    def run(self, rng):
        cfg = LossConfig(n_pairs=4, aggregation=Aggregation.MAX)
        for _ in range(INSTANCES):
            g_pos = rng.random(6) * 3.0
            g_negs = rng.random((6, 4)) * 3.0
            before = df_margin_loss(g_pos, g_negs, cfg)
            raised = g_negs.copy()
            rows = np.arange(6)
            raised[rows, g_negs.argmax(axis=1)] += rng.random(6)
            after = df_margin_loss(g_pos, raised, cfg)
            self.require(after >= before, f"loss fell from {before} to {after}")
        return f"{INSTANCES} instances"


class LossGradientCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="loss_gradients",
            module="goodness-loss",
            op="gradients",
            description="Analytic loss gradients match central differences for every family",
            category=CheckCategory.GRADIENT,
        )

    def run(self, rng):
        h = 1e-6
        worst = 0.0
        for family in LossFamily:
            loss = build_loss(LossConfig(family=family, n_pairs=3, aggregation=Aggregation.AVG))
            g_pos = rng.random(4) * 4.0 + 0.5
            g_negs = rng.random((4, 3)) * 4.0 + 0.5
            d_pos, d_negs = loss.gradients(g_pos, g_negs)
            for arr, grad in ((g_pos, d_pos), (g_negs, d_negs)):
                for idx in np.ndindex(*arr.shape):
                    original = arr[idx]
                    arr[idx] = original + h
                    plus = loss.value(g_pos, g_negs)
                    arr[idx] = original - h
                    minus = loss.value(g_pos, g_negs)
                    arr[idx] = original
                    numeric = (plus - minus) / (2 * h)
                    gap = abs(numeric - grad[idx])
                    self.require(gap <= 1e-5, f"{family.value} gradient off by {gap:.2e} at {idx}")
                    worst = max(worst, gap)
        return f"worst absolute gap {worst:.2e}"


class GoodnessScalingCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="goodness_quadratic",
            module="goodness-loss",
            op="goodness",
            description="Goodness is non-negative and goodness(c*v) = c^2 * goodness(v)",
            category=CheckCategory.LOSS,
        )

    def run(self, rng):
        for _ in range(INSTANCES):
            shape = (int(rng.integers(1, 6)),) + tuple(int(d) for d in rng.integers(1, 5, size=int(rng.integers(1, 4))))
            v = rng.standard_normal(shape)
            c = float(rng.standard_normal() * 3.0)
            for mean_square in (False, True):
                g = goodness(v, mean_square)
                self.require(np.all(g >= 0), "negative goodness")
                scaled = goodness(c * v, mean_square)
                self.require(np.allclose(scaled, c * c * g, rtol=1e-12, atol=0),
                             f"goodness({c:.3f} v) is not c^2 goodness(v) for shape {shape}")
        return f"{INSTANCES} tensors, sum and mean square"


class MarginSatisfiedCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="margin_zero_iff_met",
            module="goodness-loss",
            op="df_margin_loss",
            description="The margin loss is zero exactly when lambda = 0 and every positive clears m + A",
            category=CheckCategory.LOSS,
        )

    def run(self, rng):
        for _ in range(INSTANCES):
            b, n = int(rng.integers(1, 9)), int(rng.integers(1, 6))
            margin = float(rng.random() * 2.0)
            g_negs = rng.random((b, n)) * 4.0 + 0.01
            aggregation = Aggregation.MAX if rng.random() < 0.5 else Aggregation.AVG
            cfg = LossConfig(margin=margin, lambda_reg=0.0, n_pairs=n, aggregation=aggregation)
            agg = g_negs.max(axis=1) if aggregation == Aggregation.MAX else g_negs.mean(axis=1)

            met = agg + margin + rng.random(b)
            self.require(df_margin_loss(met, g_negs, cfg) == 0.0, "loss is nonzero with every margin met")
            short = met.copy()
            short[int(rng.integers(0, b))] = agg.min() + margin * float(rng.random()) - 1e-3
            self.require(df_margin_loss(short, g_negs, cfg) > 0.0, "loss is zero with a margin violated")
            weighted = cfg.model_copy(update={"lambda_reg": float(rng.random()) + 1e-3})
            self.require(df_margin_loss(met, g_negs, weighted) > 0.0, "loss is zero with lambda > 0")
        return f"{INSTANCES} instances"


class PositiveMonotonicityCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="loss_monotone_in_positive",
            module="goodness-loss",
            op="value",
            description="Raising positive goodness never raises any loss family's value",
            category=CheckCategory.LOSS,
        )

    def run(self, rng):
        for family in LossFamily:
            loss = build_loss(LossConfig(family=family, n_pairs=3))
            for _ in range(INSTANCES // 10):
                g_pos = rng.random(5) * 6.0
                g_negs = rng.random((5, 3)) * 6.0
                raised = g_pos + rng.random(5) * 2.0
                before, after = loss.value(g_pos, g_negs), loss.value(raised, g_negs)
                self.require(after <= before + 1e-12, f"{family.value}: loss rose from {before} to {after}")
        return f"{len(LossFamily)} families"


class LargeGoodnessCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="loss_finite_large_inputs",
            module="goodness-loss",
            op="value",
            description="Every loss family and its gradients stay finite for goodness up to 1e4",
            category=CheckCategory.LOSS,
        )

    def run(self, rng):
        extremes = [0.0, 1e-12, 1.0, 1e2, 1e3, 1e4]
        for family in LossFamily:
            loss = build_loss(LossConfig(family=family, n_pairs=2))
            for pos in extremes:
                for neg in extremes:
                    g_pos = np.full(3, pos)
                    g_negs = np.full((3, 2), neg)
                    d_pos, d_negs = loss.gradients(g_pos, g_negs)
                    self.require(np.isfinite(loss.value(g_pos, g_negs)),
                                 f"{family.value}: non-finite loss at g_pos={pos}, g_neg={neg}")
                    self.require(np.all(np.isfinite(d_pos)) and np.all(np.isfinite(d_negs)),
                                 f"{family.value}: non-finite gradient at g_pos={pos}, g_neg={neg}")
        return f"{len(extremes) ** 2} goodness pairs per family"
