"""
Finite-difference gradient checks and the full-backprop oracle
"""
import numpy as np

from distance_forward.config import LossConfig, StrategyConfig, StrategyKind
from distance_forward.core.gradcheck import check_block_gradients, check_layer_gradients, relative_error
from distance_forward.core.layers import LayerKind, LayerSpec, build_layer
from distance_forward.losses.families import build_loss
from distance_forward.training.registry import build_strategy
from distance_forward.training.step import compute_gradients
from distance_forward.verification.base import BaseCheck, CheckCategory, CheckMetadata
from distance_forward.verification.toy import full_chain_gradients, toy_batch, toy_cnn, toy_mlp

GRADIENT_TOLERANCE = 1e-4
ORACLE_TOLERANCE = 1e-6
BATCH = 3

# (spec, per-sample input shape, train mode); three shapes per layer kind
LAYER_CASES = [
    (LayerSpec(kind=LayerKind.DENSE, out_features=4), (3,), True),
    (LayerSpec(kind=LayerKind.DENSE, out_features=2), (5,), True),
    (LayerSpec(kind=LayerKind.DENSE, out_features=7), (1,), True),
    (LayerSpec(kind=LayerKind.CONV2D, out_channels=3, kernel_size=3, padding=1), (2, 5, 5), True),
    (LayerSpec(kind=LayerKind.CONV2D, out_channels=2, kernel_size=2, stride=2), (1, 6, 6), True),
    (LayerSpec(kind=LayerKind.CONV2D, out_channels=1, kernel_size=3, padding=2), (3, 4, 5), True),
    (LayerSpec(kind=LayerKind.BATCHNORM), (4,), True),
    (LayerSpec(kind=LayerKind.BATCHNORM), (3, 4, 4), True),
    (LayerSpec(kind=LayerKind.BATCHNORM), (5,), False),
    (LayerSpec(kind=LayerKind.RELU), (6,), True),
    (LayerSpec(kind=LayerKind.RELU), (2, 3, 3), True),
    (LayerSpec(kind=LayerKind.RELU), (4,), True),
    (LayerSpec(kind=LayerKind.AVGPOOL, kernel_size=2), (2, 4, 4), True),
    (LayerSpec(kind=LayerKind.AVGPOOL, kernel_size=3), (1, 6, 6), True),
    (LayerSpec(kind=LayerKind.AVGPOOL, kernel_size=2, stride=2), (3, 4, 6), True),
    (LayerSpec(kind=LayerKind.FLATTEN), (2, 3, 3), True),
    (LayerSpec(kind=LayerKind.FLATTEN), (4,), True),
    (LayerSpec(kind=LayerKind.FLATTEN), (1, 2, 5), True),
]


class LayerGradientCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="layer_gradients",
            module="tensor-core",
            op="backward",
            description="Every layer kind's backward matches central differences (64-bit, 3 shapes each)",
            category=CheckCategory.GRADIENT,
        )

    def run(self, rng):
        worst = 0.0
        for spec, shape, train in LAYER_CASES:
            layer = build_layer(spec, shape, rng, dtype=np.float64)
            x = rng.standard_normal((BATCH,) + shape)
            for name, err in check_layer_gradients(layer, x, rng, train=train).items():
                self.require(err <= GRADIENT_TOLERANCE,
                             f"{spec.kind.value} {shape} '{name}' relative error {err:.2e}")
                worst = max(worst, err)
        return f"{len(LAYER_CASES)} layers, worst relative error {worst:.2e}"


class BlockGradientCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="block_gradients",
            module="tensor-core",
            op="block_backward",
            description="Two-unit block backward matches central differences (dense and conv models)",
            category=CheckCategory.GRADIENT,
        )

    def run(self, rng):
        worst = 0.0
        for model, _ in (toy_mlp(rng, depth=2), toy_cnn(rng), toy_mlp(rng, depth=3, width=4)):
            for start in range(model.depth - 1):
                units = [start, start + 1]
                x = rng.standard_normal((BATCH,) + model.unit_input_shape(start))
                for name, err in check_block_gradients(model, units, x, rng).items():
                    self.require(err <= GRADIENT_TOLERANCE, f"block {units} '{name}' relative error {err:.2e}")
                    worst = max(worst, err)
        return f"worst relative error {worst:.2e}"


class OverlapOracleCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="dfo_full_window_oracle",
            module="trainer",
            op="dfo_update",
            description="DF-O with group_size = depth equals full backprop of the summed unit losses",
            category=CheckCategory.GRADIENT,
        )

    def run(self, rng):
        model, emb = toy_mlp(rng, depth=3)
        batch = toy_batch(emb, rng)
        loss_fn = build_loss(LossConfig(n_pairs=batch.n_pairs))
        expected = full_chain_gradients(model, loss_fn, batch)

        strategy = build_strategy(model, StrategyConfig(kind=StrategyKind.DFO, group_size=model.depth))
        model.zero_grad()
        compute_gradients(strategy, emb, loss_fn, batch)
        worst = 0.0
        for name, p in model.named_params():
            err = relative_error(p.grad, expected[name])
            self.require(err <= ORACLE_TOLERANCE, f"'{name}' differs from the full-chain oracle by {err:.2e}")
            worst = max(worst, err)
        model.zero_grad()
        return f"worst relative error {worst:.2e}"


class ForwardDeterminismCheck(BaseCheck):
    def get_metadata(self):
        return CheckMetadata(
            name="forward_deterministic",
            module="tensor-core",
            op="forward",
            description="Identical inputs and parameters give bitwise-identical unit outputs",
            category=CheckCategory.GRADIENT,
        )

    def run(self, rng):
        for model, emb in (toy_mlp(rng), toy_cnn(rng)):
            x = rng.standard_normal((4,) + emb.output_shape)
            first = model.forward(x)
            again = model.forward(x.copy())
            for u, (a, b) in enumerate(zip(first, again)):
                self.require(np.array_equal(a, b), f"unit {u} output differs between two eval passes")
            for u in range(model.depth):
                h_a, _ = model.forward_unit(u, x if u == 0 else first[u - 1], train=True)
                h_b, _ = model.forward_unit(u, x.copy() if u == 0 else first[u - 1].copy(), train=True)
                self.require(np.array_equal(h_a, h_b), f"unit {u} train-mode output differs between two passes")
        return "mlp and cnn, eval and train mode"
