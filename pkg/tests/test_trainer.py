"""
Tests for update strategies, the streaming training step and the trainer
"""
import copy
import json
import logging

import numpy as np
import pytest

from distance_forward.config import (
    DecodeConfig,
    LossConfig,
    LossFamily,
    StrategyConfig,
    StrategyKind,
    TrainConfig,
)
from distance_forward.data.normalize import compute_stats, normalize, normalize_images
from distance_forward.exceptions import ConfigurationError, DivergenceError, InvariantError
from distance_forward.losses.families import build_loss
from distance_forward.samples.builder import make_batch
from distance_forward.training.feedback import FeedbackMatrices
from distance_forward.training.noise import grad_noise_sigma, inject_gradient_noise
from distance_forward.training.registry import build_strategy, get_registry
from distance_forward.training.step import compute_gradients, train_step
from distance_forward.training.trainer import TRAIN_STREAMS, Trainer, dfo_update, dfr_update, greedy_update, train
from distance_forward.verification.toy import full_chain_gradients, toy_batch, toy_mlp

SYMBA = LossConfig(family=LossFamily.SYMBA, n_pairs=3)


def _params(model, emb):
    return [p.value.copy() for p in model.params + emb.params]


def _fast_config(**kwargs) -> TrainConfig:
    values = dict(epochs=2, batch_size=10, base_lr=1e-2, eval_every=0, loss=LossConfig(n_pairs=3))
    values.update(kwargs)
    return TrainConfig(**values)


class TestStrategies:
    def test_registry_lists_every_kind(self):
        kinds = {m.kind for m in get_registry().list_strategies()}
        assert kinds == set(StrategyKind)

    def test_windows(self, mlp):
        model, _ = mlp
        dfo = build_strategy(model, StrategyConfig(kind=StrategyKind.DFO, group_size=2))
        assert [dfo.window(u) for u in range(3)] == [[0], [0, 1], [1, 2]]
        greedy = build_strategy(model, StrategyConfig(kind=StrategyKind.GREEDY))
        assert greedy.window(2) == [2]
        bp = build_strategy(model, StrategyConfig(kind=StrategyKind.BP))
        assert bp.loss_units() == [2]
        assert bp.window(2) == [0, 1, 2]

    def test_greedy_rejects_wider_groups(self):
        with pytest.raises(ValueError):
            StrategyConfig(kind=StrategyKind.GREEDY, group_size=2)

    def test_group_size_clamped_with_warning(self, mlp, caplog):
        model, _ = mlp
        with caplog.at_level(logging.WARNING):
            strategy = build_strategy(model, StrategyConfig(kind=StrategyKind.DFO, group_size=5))
        assert strategy.group_size == 3
        assert "clamping" in caplog.text

    def test_dfr_feedback_group_mismatch(self, mlp):
        model, _ = mlp
        feedback = FeedbackMatrices(model, 3)
        with pytest.raises(InvariantError):
            build_strategy(model, StrategyConfig(kind=StrategyKind.DFR, group_size=2), feedback=feedback)


class TestLocality:
    @pytest.mark.parametrize("cfg", [
        StrategyConfig(kind=StrategyKind.GREEDY),
        StrategyConfig(kind=StrategyKind.DFO, group_size=2),
        StrategyConfig(kind=StrategyKind.DFR, group_size=2),
    ])
    def test_loss_moves_only_its_window(self, cfg, rng):
        base_model, base_emb = toy_mlp(rng, depth=4)
        batch = toy_batch(base_emb, rng)
        loss_fn = build_loss(SYMBA)
        for j in range(4):
            model, emb = copy.deepcopy(base_model), copy.deepcopy(base_emb)
            strategy = build_strategy(model, cfg)
            train_step(strategy, emb, loss_fn, batch, lr=1e-2, active_units=[j])
            moved = {u for u in range(4)
                     if any(not np.array_equal(a.value, b.value)
                            for a, b in zip(base_model.unit_params(u), model.unit_params(u)))}
            assert moved == set(strategy.window(j))
            assert (not np.array_equal(emb.table.value, base_emb.table.value)) == (j == 0)

    def test_earlier_momentum_does_not_move_inactive_units(self, rng):
        model, emb = toy_mlp(rng, depth=4)
        batch = toy_batch(emb, rng)
        loss_fn = build_loss(SYMBA)
        strategy = build_strategy(model, StrategyConfig(kind=StrategyKind.GREEDY))
        train_step(strategy, emb, loss_fn, batch, lr=1e-2)
        snapshot = [[p.value.copy() for p in model.unit_params(u)] for u in range(4)]
        train_step(strategy, emb, loss_fn, batch, lr=1e-2, active_units=[3])
        for u in range(3):
            for before, p in zip(snapshot[u], model.unit_params(u)):
                np.testing.assert_array_equal(before, p.value)
        assert any(not np.array_equal(b, p.value) for b, p in zip(snapshot[3], model.unit_params(3)))

    def test_bp_updates_embedding_from_the_top_loss(self, mlp, batch):
        model, emb = mlp
        before = emb.table.value.copy()
        strategy = build_strategy(model, StrategyConfig(kind=StrategyKind.BP))
        train_step(strategy, emb, build_loss(LossConfig(n_pairs=batch.n_pairs)), batch, lr=1e-2)
        assert not np.array_equal(before, emb.table.value)


class TestOverlapOracle:
    def test_full_window_equals_backprop_of_summed_losses(self, mlp, batch):
        model, emb = mlp
        loss_fn = build_loss(LossConfig(n_pairs=batch.n_pairs, margin=5.0))
        reference = full_chain_gradients(model, loss_fn, batch)

        strategy = build_strategy(model, StrategyConfig(kind=StrategyKind.DFO, group_size=model.depth))
        model.zero_grad()
        compute_gradients(strategy, emb, loss_fn, batch)
        for name, p in model.named_params():
            np.testing.assert_allclose(p.grad, reference[name], rtol=1e-6, atol=1e-12, err_msg=name)


class TestRandomFeedback:
    def test_zero_feedback_leaves_interior_unit_untouched(self, rng):
        model, emb = toy_mlp(rng, depth=2)
        batch = toy_batch(emb, rng)
        shapes = {u: model.unit_output_shape(u) for u in range(2)}
        d1, d0 = int(np.prod(shapes[1])), int(np.prod(shapes[0]))
        feedback = FeedbackMatrices.from_arrays({(1, 0): np.zeros((d1, d0))}, shapes, group_size=2)
        strategy = build_strategy(model, StrategyConfig(kind=StrategyKind.DFR, group_size=2), feedback=feedback)

        before = [p.value.copy() for p in model.unit_params(0)]
        train_step(strategy, emb, build_loss(SYMBA), batch, lr=1e-2, active_units=[1])
        for a, p in zip(before, model.unit_params(0)):
            np.testing.assert_array_equal(a, p.value)

    def test_matrices_are_read_only_and_unchanged(self, mlp, tiny_dataset):
        model, emb = mlp
        feedback = FeedbackMatrices(model, 2, seed=3)
        snapshot = {k: m.copy() for k, m in feedback.items()}
        cfg = _fast_config(strategy=StrategyConfig(kind=StrategyKind.DFR, group_size=2))
        Trainer(model, emb, cfg, feedback=feedback).fit(tiny_dataset)
        for key, mat in feedback.items():
            assert not mat.flags.writeable
            np.testing.assert_array_equal(mat, snapshot[key])

    def test_scale(self, mlp):
        model, _ = mlp
        feedback = FeedbackMatrices(model, 2, scale=0.5)
        d_top = int(np.prod(model.unit_output_shape(1)))
        assert np.max(np.abs(feedback.get(1, 0))) <= 0.5 / np.sqrt(d_top)

    def test_missing_matrix(self, mlp):
        model, _ = mlp
        with pytest.raises(ConfigurationError):
            FeedbackMatrices(model, 2).get(2, 0)


class TestStep:
    def test_nan_input_diverges(self, mlp, rng):
        model, emb = mlp
        images = np.full((4,) + emb.image_shape, np.nan)
        batch = make_batch(images, np.arange(4), 3, emb, rng)
        strategy = build_strategy(model, StrategyConfig())
        with pytest.raises(DivergenceError, match="unit 0"):
            compute_gradients(strategy, emb, build_loss(LossConfig(n_pairs=3)), batch)

    def test_caches_are_released(self, rng):
        model, emb = toy_mlp(rng, depth=5)
        batch = toy_batch(emb, rng)
        loss_fn = build_loss(LossConfig(n_pairs=batch.n_pairs))
        dfo = compute_gradients(build_strategy(model, StrategyConfig(group_size=2)), emb, loss_fn, batch)
        bp = compute_gradients(build_strategy(model, StrategyConfig(kind=StrategyKind.BP)), emb, loss_fn, batch)
        assert dfo.peak_cached_units == 2
        assert bp.peak_cached_units == 5

    def test_loss_vectors(self, mlp, batch):
        model, emb = mlp
        greedy = greedy_update(copy.deepcopy(model), copy.deepcopy(emb), batch, SYMBA)
        assert np.all(np.isfinite(greedy))
        dfo = dfo_update(copy.deepcopy(model), copy.deepcopy(emb), batch, SYMBA, group_size=2)
        np.testing.assert_allclose(dfo, greedy)
        feedback = FeedbackMatrices(model, 2)
        dfr = dfr_update(copy.deepcopy(model), copy.deepcopy(emb), batch, SYMBA, feedback)
        np.testing.assert_allclose(dfr, greedy)



class TestGradientNoise:
    def test_zero_sigma_is_identity(self, rng):
        g = rng.standard_normal((3, 4))
        original = g.copy()
        inject_gradient_noise([g], 0.0, rng)
        np.testing.assert_array_equal(g, original)

    def test_zero_gradients_stay_zero(self, rng):
        g = np.zeros(5)
        inject_gradient_noise([g], 1.0, rng)
        assert not np.any(g)

    def test_noise_scales_with_rms(self, rng):
        g = np.full(20000, 2.0)
        inject_gradient_noise([g], 0.5, rng)
        assert np.std(g) == pytest.approx(1.0, rel=0.05)

    def test_negative_sigma(self, rng):
        with pytest.raises(ValueError):
            inject_gradient_noise([np.ones(2)], -0.1, rng)

    def test_levels(self):
        assert grad_noise_sigma(0) == 0.0
        assert grad_noise_sigma(3) == 0.5
        with pytest.raises(ValueError):
            grad_noise_sigma(6)
        assert TrainConfig(grad_noise_level=2).effective_grad_noise_sigma == 0.25
        assert TrainConfig(grad_noise_level=2, grad_noise_sigma=0.05).effective_grad_noise_sigma == 0.05


class TestTrainer:
    def test_zero_epochs(self, mlp, tiny_dataset):
        model, emb = mlp
        before = _params(model, emb)
        report = train(model, emb, tiny_dataset, _fast_config(epochs=0))
        assert report.epochs == []
        assert report.final_accuracy is None
        for a, b in zip(before, _params(model, emb)):
            np.testing.assert_array_equal(a, b)

    def test_same_seed_is_bitwise_reproducible(self, mlp, tiny_dataset):
        model, emb = mlp
        runs = []
        for _ in range(2):
            m, e = copy.deepcopy(model), copy.deepcopy(emb)
            train(m, e, tiny_dataset, _fast_config(grad_noise_level=1, seed=11))
            runs.append(_params(m, e))
        for a, b in zip(*runs):
            np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self, mlp, tiny_dataset):
        model, emb = mlp
        finals = []
        for seed in (1, 2):
            m, e = copy.deepcopy(model), copy.deepcopy(emb)
            train(m, e, tiny_dataset, _fast_config(seed=seed))
            finals.append(m.params[0].value.copy())
        assert not np.array_equal(*finals)

    @pytest.mark.parametrize("kind", list(StrategyKind))
    def test_loss_decreases(self, kind, mlp, tiny_dataset):
        model, emb = mlp
        cfg = _fast_config(epochs=15, strategy=StrategyConfig(kind=kind))
        report = train(model, emb, tiny_dataset, cfg)
        assert len(report.epochs) == 15
        top = model.depth - 1
        assert report.epochs[-1].unit_losses[top] < report.epochs[0].unit_losses[top]

    def test_report_rows(self, mlp, tiny_dataset):
        model, emb = mlp
        report = train(model, emb, tiny_dataset, _fast_config(eval_every=1, eval_samples=20),
                       eval_dataset=tiny_dataset, decode_config=DecodeConfig())
        rows = report.rows()
        assert [r["epoch"] for r in rows] == [1, 2]
        assert list(rows[0])[:8] == ["epoch", "strategy", "group_size", "n_pairs", "lr", "seconds",
                                     "backward_seconds", "test_accuracy"]
        assert 0.0 <= report.final_accuracy <= 1.0
        assert "separation_unit2" in rows[0]

    def test_epoch_accuracy_uses_configured_goodness(self, mlp, tiny_dataset, monkeypatch):
        import importlib

        decode = importlib.import_module("distance_forward.evaluation.decode")

        seen = []
        real = decode.accuracy

        def spy(*args, **kwargs):
            seen.append(kwargs.get("mean_square"))
            return real(*args, **kwargs)

        monkeypatch.setattr(decode, "accuracy", spy)
        model, emb = mlp
        cfg = _fast_config(eval_every=1, eval_samples=20, loss=LossConfig(n_pairs=3, mean_goodness=True))
        report = train(model, emb, tiny_dataset, cfg, eval_dataset=tiny_dataset, decode_config=DecodeConfig())
        assert seen == [True, True]

        layer_set = DecodeConfig().resolve(model.depth, cfg.strategy.kind)
        expected = real(model, emb, tiny_dataset.subset(limit=20), layer_set, mean_square=True)
        assert report.final_accuracy == expected

    def test_bp_rows_only_carry_top_loss(self, mlp, tiny_dataset):
        model, emb = mlp
        report = train(model, emb, tiny_dataset, _fast_config(strategy=StrategyConfig(kind=StrategyKind.BP)))
        assert report.epochs[0].unit_losses[:2] == [None, None]
        assert report.epochs[0].unit_losses[2] is not None

    def test_step_hook(self, mlp, tiny_dataset):
        model, emb = mlp
        steps = []
        train(model, emb, tiny_dataset, _fast_config(), step_hook=lambda step, result: steps.append(step))
        assert steps == list(range(8))


class TestRandomStreams:
    def test_state_survives_json_and_resumes_every_stream(self, mlp, tiny_dataset):
        model, emb = mlp
        trainer = Trainer(model, emb, _fast_config(epochs=1, seed=5))
        trainer.fit(tiny_dataset)
        state = json.loads(json.dumps(trainer.rng_state()))
        assert state["seed"] == 5
        assert set(state["streams"]) == set(TRAIN_STREAMS)
        assert all("bit_generator" in s for s in state["streams"].values())

        resumed = Trainer(copy.deepcopy(model), copy.deepcopy(emb), _fast_config(epochs=1, seed=99))
        resumed.restore_rng_state(state)
        for name in TRAIN_STREAMS:
            np.testing.assert_array_equal(resumed.rngs[name].random(4), trainer.rngs[name].random(4), err_msg=name)

    def test_state_moves_with_training(self, mlp, tiny_dataset):
        model, emb = mlp
        trainer = Trainer(model, emb, _fast_config(epochs=1))
        before = trainer.rng_state()
        trainer.fit(tiny_dataset)
        assert trainer.rng_state()["streams"]["shuffle"] != before["streams"]["shuffle"]

    def test_incomplete_state(self, mlp):
        model, emb = mlp
        trainer = Trainer(model, emb, _fast_config())
        state = trainer.rng_state()
        del state["streams"]["noise"]
        with pytest.raises(ConfigurationError, match="noise"):
            trainer.restore_rng_state(state)

    def test_unknown_bit_generator(self, mlp):
        model, emb = mlp
        trainer = Trainer(model, emb, _fast_config())
        state = trainer.rng_state()
        state["streams"]["shuffle"]["bit_generator"] = "Generator"
        with pytest.raises(ConfigurationError, match="unusable rng state"):
            trainer.restore_rng_state(state)


class TestAugmentation:
    def test_normalized_split_needs_stats(self, mlp, tiny_dataset):
        model, emb = mlp
        normalized = normalize(tiny_dataset, compute_stats(tiny_dataset))
        with pytest.raises(ConfigurationError, match="normalization stats"):
            Trainer(model, emb, _fast_config(epochs=1), augment=True).fit(normalized)

    def test_pads_with_normalized_black(self, mlp, tiny_dataset, monkeypatch):
        import distance_forward.training.trainer as trainer_module

        fills = []
        real = trainer_module.random_crop_flip

        def spy(images, rng, **kwargs):
            fills.append(kwargs.get("fill"))
            return real(images, rng, **kwargs)

        monkeypatch.setattr(trainer_module, "random_crop_flip", spy)
        stats = compute_stats(tiny_dataset)
        model, emb = mlp
        Trainer(model, emb, _fast_config(epochs=1), augment=True, stats=stats).fit(normalize(tiny_dataset, stats))
        assert len(fills) == 4
        expected = normalize_images(np.zeros((1, 1, 1, 1)), stats).ravel().tolist()
        for fill in fills:
            assert fill == pytest.approx(expected, rel=1e-6)

    def test_raw_split_pads_with_zero(self, mlp, tiny_dataset, monkeypatch):
        import distance_forward.training.trainer as trainer_module

        fills = []
        real = trainer_module.random_crop_flip

        def spy(images, rng, **kwargs):
            fills.append(kwargs.get("fill"))
            return real(images, rng, **kwargs)

        monkeypatch.setattr(trainer_module, "random_crop_flip", spy)
        model, emb = mlp
        Trainer(model, emb, _fast_config(epochs=1), augment=True).fit(tiny_dataset)
        assert fills and all(f is None for f in fills)
