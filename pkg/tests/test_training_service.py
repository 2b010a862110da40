"""
Tests for Adam, gradient clipping, warm-up, early stopping and seed ensembles
"""

import numpy as np
import pytest

from app.schemas import LossConfig, ModelConfig, TrainConfig
from app.services.metrics_service import pearson_correlation
from app.services.pignn_service import extract_connectivity, init_model, make_batch, validation_loss
from app.services.preprocessing_service import split_panel
from app.services.synth_service import random_crm_world
from app.services.training_service import Adam, clip_by_global_norm, learning_rates, train, train_ensemble

SMALL = ModelConfig(graph_mode="self_learned", gcn_width=4, head_width=8)
ZERO_LOSS = LossConfig(lambda_q=0.0, lambda_p=0.0, lambda_f=0.0)


class TestClipping:
    def test_rescales_to_max_norm(self):
        """A norm-5 gradient with max norm 1 is rescaled to norm 1."""
        clipped, norm = clip_by_global_norm(np.array([3.0, 4.0]), 1.0)
        assert norm == 5.0
        np.testing.assert_allclose(clipped, [0.6, 0.8])

    def test_small_gradient_untouched(self):
        g = np.array([0.1, -0.2])
        clipped, norm = clip_by_global_norm(g, 1.0)
        assert clipped is g
        assert norm == pytest.approx(np.sqrt(0.05))

    def test_zero_gradient(self):
        clipped, norm = clip_by_global_norm(np.zeros(3), 1.0)
        assert norm == 0.0 and np.all(clipped == 0.0)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        """With bias correction the first step has magnitude lr in every coordinate."""
        opt = Adam(learning_rate=0.1)
        new = opt.step(np.zeros(3), np.array([2.0, -0.5, 1e-3]))
        np.testing.assert_allclose(new, [-0.1, 0.1, -0.1], rtol=1e-4)
        assert opt.t == 1

    def test_per_parameter_learning_rate(self):
        opt = Adam(learning_rate=np.array([0.1, 1.0]))
        new = opt.step(np.zeros(2), np.array([2.0, 2.0]))
        np.testing.assert_allclose(new, [-0.1, -1.0], rtol=1e-4)

    def test_minimizes_quadratic(self):
        opt = Adam(learning_rate=0.05)
        x = np.array([3.0, -2.0])
        for _ in range(2000):
            x = opt.step(x, 2.0 * x)
        np.testing.assert_allclose(x, 0.0, atol=1e-3)

    def test_from_config(self):
        opt = Adam.from_config(TrainConfig(learning_rate=0.01, beta1=0.8))
        assert opt.learning_rate == 0.01 and opt.beta1 == 0.8


class TestLearningRates:
    def test_connectivity_block_scaled(self, crm_world):
        _, panel = crm_world
        model = init_model(panel, split_panel(panel).train, SMALL, seed=0)
        rates = learning_rates(model, TrainConfig(learning_rate=1e-3, connectivity_lr_scale=10.0))
        lo, hi, _ = model.layout.offsets()["F_raw"]
        np.testing.assert_allclose(rates[lo:hi], 1e-2)
        assert np.all(np.delete(rates, np.arange(lo, hi)) == 1e-3)


class TestTrain:
    def test_zero_epochs_returns_initial_parameters(self, crm_world):
        _, panel = crm_world
        split = split_panel(panel)
        model = init_model(panel, split.train, SMALL, seed=0)
        result = train(model, panel, split, TrainConfig(max_epochs=0))
        assert np.array_equal(result.model.params, model.params)
        assert [r.epoch for r in result.history] == [0]
        assert result.best_epoch == 0

    def test_returns_best_validation_snapshot_after_warmup(self, crm_world, quick_train):
        _, panel = crm_world
        split = split_panel(panel)
        model = init_model(panel, split.train, SMALL, seed=0)
        result = train(model, panel, split, quick_train, LossConfig())
        best = min((r for r in result.history if r.epoch >= quick_train.warmup_epochs), key=lambda r: r.val_loss)
        assert result.best_epoch == best.epoch
        assert result.best_val_loss == best.val_loss
        val_batch = make_batch(model, panel, split.validation)
        assert validation_loss(result.model, result.model.params, val_batch, LossConfig()) == pytest.approx(best.val_loss)

    def test_training_reduces_loss(self, crm_world):
        _, panel = crm_world
        split = split_panel(panel)
        model = init_model(panel, split.train, SMALL, seed=0)
        result = train(model, panel, split, TrainConfig(learning_rate=5e-3, max_epochs=60, patience=60),
                       LossConfig(lambda_f=0.0))
        assert result.history[-1].train_loss < result.history[0].train_loss

    def test_early_stop_after_patience(self, crm_world):
        """A zero objective never moves the parameters, so validation never improves."""
        _, panel = crm_world
        split = split_panel(panel)
        model = init_model(panel, split.train, SMALL, seed=0)
        result = train(model, panel, split, TrainConfig(max_epochs=500, patience=3, warmup_epochs=0), ZERO_LOSS)
        assert result.stopped_early
        assert result.best_epoch == 0
        assert result.history[-1].epoch == 3
        assert np.array_equal(result.model.params, model.params)

    def test_patience_counts_from_end_of_warmup(self, crm_world):
        _, panel = crm_world
        split = split_panel(panel)
        model = init_model(panel, split.train, SMALL, seed=0)
        result = train(model, panel, split, TrainConfig(max_epochs=500, patience=3, warmup_epochs=10), ZERO_LOSS)
        assert result.stopped_early
        assert result.best_epoch == 10
        assert result.history[-1].epoch == 13

    def test_early_epochs_never_selected(self, crm_world):
        """Snapshots from inside the warm-up are never returned."""
        _, panel = crm_world
        split = split_panel(panel)
        model = init_model(panel, split.train, SMALL, seed=0)
        config = TrainConfig(learning_rate=5e-3, max_epochs=40, patience=40, warmup_epochs=20)
        result = train(model, panel, split, config, LossConfig())
        assert result.best_epoch >= 20

    def test_run_shorter_than_warmup_returns_last_epoch(self, crm_world):
        _, panel = crm_world
        split = split_panel(panel)
        model = init_model(panel, split.train, SMALL, seed=0)
        result = train(model, panel, split, TrainConfig(learning_rate=5e-3, max_epochs=4, warmup_epochs=100))
        assert result.best_epoch == 4
        assert not result.stopped_early

    def test_fixed_seed_reproduces_loss_history(self, crm_world, quick_train):
        _, panel = crm_world
        split = split_panel(panel)
        runs = [train(init_model(panel, split.train, SMALL, seed=3), panel, split, quick_train) for _ in range(2)]
        assert runs[0].losses() == runs[1].losses()
        assert np.array_equal(runs[0].model.params, runs[1].model.params)

    def test_gradient_norms_recorded(self, crm_world, quick_train):
        _, panel = crm_world
        split = split_panel(panel)
        result = train(init_model(panel, split.train, SMALL, seed=1), panel, split, quick_train)
        assert result.history[0].grad_norm == 0.0
        assert all(r.grad_norm > 0 for r in result.history[1:])
        assert result.losses()[0]["epoch"] == 0

    @pytest.mark.slow
    def test_crm_world_loss_drops_below_tenth(self, crm_world):
        """Default step rate: final training loss under 10% of the initial loss within 2000 epochs."""
        _, panel = crm_world
        split = split_panel(panel)
        model = init_model(panel, split.train, SMALL, seed=0)
        result = train(model, panel, split, TrainConfig(max_epochs=2000, patience=2000), LossConfig())
        assert result.history[-1].epoch <= 2000
        assert result.history[-1].train_loss < 0.1 * result.history[0].train_loss


class TestConnectivityRecovery:
    @pytest.mark.slow
    def test_self_learned_connectivity_tracks_generating_matrix(self):
        """Noiseless 2 x 4 CRM world: mean Pearson r over ten seeds above 0.9."""
        params, panel = random_crm_world(2, 4, 200, seed=11)
        split = split_panel(panel)
        config = TrainConfig(max_epochs=3000, seeds=list(range(10)))
        results = train_ensemble(panel, split, ModelConfig(graph_mode="self_learned"), LossConfig(), config)
        scores = [pearson_correlation(extract_connectivity(r.model).values.ravel(), params.F.values.ravel())
                  for r in results]
        assert np.mean(scores) > 0.9, scores


class TestTrainEnsemble:
    def test_one_member_per_seed(self, crm_world, quick_train):
        _, panel = crm_world
        results = train_ensemble(panel, split_panel(panel), SMALL, LossConfig(), quick_train)
        assert [r.model.seed for r in results] == [0, 1]
        assert not np.array_equal(results[0].model.params, results[1].model.params)

    def test_explicit_seeds_override_config(self, crm_world, quick_train):
        _, panel = crm_world
        results = train_ensemble(panel, split_panel(panel), SMALL, LossConfig(), quick_train, seeds=[7])
        assert [r.model.seed for r in results] == [7]
