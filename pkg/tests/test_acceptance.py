"""
Accuracy, robustness and scaling runs on the real datasets.

Every test here is marked slow and needs $DF_DATASET_ROOT.
"""
from dataclasses import dataclass
from typing import List

import numpy as np
import pytest

from distance_forward.config import NoiseKind, ProfileConfig, RobustnessConfig, StrategyKind, dataset_root, load_run_config
from distance_forward.data.dataset import Dataset
from distance_forward.data.loaders import load_dataset, load_normalized
from distance_forward.evaluation.decode import accuracy, evaluate
from distance_forward.evaluation.quantize import quantize_weights
from distance_forward.evaluation.robustness import robustness_sweep
from distance_forward.factory import build_model_and_embedding
from distance_forward.profiling.sweep import profile_sweep
from distance_forward.profiling.timing import fit_depth_scaling
from distance_forward.training.trainer import Trainer

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2]
SHORT = ["train.epochs=5"]


@dataclass
class Run:
    config: object
    model: object
    emb: object
    test: Dataset
    raw_test: Dataset
    stats: object

    @property
    def layer_set(self) -> List[int]:
        return self.config.decode.resolve(self.model.depth, self.config.train.strategy.kind)

    @property
    def mean_square(self) -> bool:
        return self.config.train.loss.mean_goodness

    def accuracy(self, model=None) -> float:
        return accuracy(model or self.model, self.emb, self.test, self.layer_set, self.mean_square)


def _train(name: str, *overrides: str) -> Run:
    config = load_run_config(name, overrides=["train.eval_every=0", *overrides])
    root = dataset_root(config.data)
    train_set, test_set, stats = load_normalized(config.data, root)
    model, emb = build_model_and_embedding(config, train_set.image_shape)
    Trainer(model, emb, config.train, augment=config.data.augment, stats=stats).fit(train_set)
    return Run(config, model, emb, test_set, load_dataset(config.data, root, "test"), stats)


def _seed_mean(name: str, *overrides: str) -> float:
    return float(np.mean([_train(name, f"train.seed={s}", *overrides).accuracy() for s in SEEDS]))


@pytest.fixture(scope="module")
def mnist_dfo() -> Run:
    return _train("mnist_dfo")


class TestDeskAccuracy:
    def test_mnist_dfo(self, mnist_dfo):
        assert mnist_dfo.accuracy() >= 0.975

    def test_fashion_mnist_dfo(self):
        assert _train("fmnist_dfo").accuracy() >= 0.87

    def test_cifar10_cnn(self):
        assert _train("cifar10_cnn").accuracy() >= 0.70

    def test_mnist_dfr(self):
        assert _train("mnist_dfr").accuracy() >= 0.965


class TestNegativeMining:
    def test_max_over_nine_beats_one_and_average(self):
        best = _seed_mean("mnist_dfo", *SHORT, "train.loss.n_pairs=9", "train.loss.aggregation=max")
        single = _seed_mean("mnist_dfo", *SHORT, "train.loss.n_pairs=1")
        averaged = _seed_mean("mnist_dfo", *SHORT, "train.loss.n_pairs=9", "train.loss.aggregation=avg")
        assert best >= single
        assert best > averaged


class TestLayerwiseRepresentation:
    def test_separation_and_depth_trend(self, mnist_dfo):
        report = evaluate(mnist_dfo.model, mnist_dfo.emb, mnist_dfo.test, mnist_dfo.layer_set,
                          mnist_dfo.mean_square)
        assert all(s > 0 for s in report.separation)
        assert report.per_layer_accuracy[-1] >= report.per_layer_accuracy[0] - 0.01
        assert report.all_layers_accuracy >= max(report.per_layer_accuracy) - 0.005


class TestRobustness:
    def test_four_bit_weights(self, mnist_dfo):
        clean = mnist_dfo.accuracy()
        assert mnist_dfo.accuracy(quantize_weights(mnist_dfo.model, 4)) >= clean - 0.02

    def test_local_training_holds_up_under_noise(self):
        """DF-O matches or beats backprop at the two highest levels for at least two noise kinds"""
        top_levels = [4, 5]
        grid = RobustnessConfig(kinds=[NoiseKind.POISSON_SHOT, NoiseKind.IMPULSE], levels=top_levels, quant_bits=[16])
        scores = {}
        for name in ("mnist_dfo", "mnist_bp"):
            by_kind = {"gradient": [], NoiseKind.POISSON_SHOT.value: [], NoiseKind.IMPULSE.value: []}
            for seed in SEEDS:
                run = _train(name, *SHORT, f"train.seed={seed}")
                rows = robustness_sweep(run.model, run.emb, run.raw_test, run.stats, run.layer_set, grid,
                                        run.mean_square)
                for row in rows:
                    if row.kind in by_kind:
                        by_kind[row.kind].append(row.accuracy)
                for level in top_levels:
                    by_kind["gradient"].append(
                        _train(name, *SHORT, f"train.seed={seed}", f"train.grad_noise_level={level}").accuracy()
                    )
            scores[name] = {kind: float(np.mean(v)) for kind, v in by_kind.items()}
        wins = sum(scores["mnist_dfo"][k] >= scores["mnist_bp"][k] for k in scores["mnist_dfo"])
        assert wins >= 2, scores


class TestLossAblations:
    def test_margin_loss_beats_threshold_loss(self):
        margin = _seed_mean("mnist_dfo", *SHORT, "train.loss.family=df_margin")
        threshold = _seed_mean("mnist_dfo", *SHORT, "train.loss.family=ff")
        assert margin >= threshold

    @pytest.mark.parametrize("weight", [0.0, 0.01, 0.1, 1.0])
    def test_negative_penalty_sweep_trains(self, weight):
        run = _train("mnist_dfo", *SHORT, f"train.loss.lambda={weight}")
        assert run.accuracy() >= 0.95


class TestBackwardScaling:
    def test_backprop_grows_linearly_and_local_critical_path_is_flat(self):
        depths = [5, 10, 15, 20, 25]
        cfg = ProfileConfig(depths=depths, strategies=[StrategyKind.BP, StrategyKind.DFO], measure_memory=False)
        rows = profile_sweep(cfg)
        bp = fit_depth_scaling(depths, [r.backward_ms_median for r in rows if r.strategy == "bp"])
        dfo = fit_depth_scaling(depths, [r.critical_path_ms_median for r in rows if r.strategy == "dfo"])
        assert bp.slope > 0
        assert bp.r_squared > 0.9
        assert abs(dfo.slope) < 0.1 * bp.slope
