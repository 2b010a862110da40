"""
Tests for the graph network, physics residual and combined loss
"""

import math

import numpy as np
import pytest

from app.autodiff import gradcheck, mixed_gradcheck
from app.autodiff.dual import Dual, seed as seed_time
from app.domain import AdjacencyMatrix
from app.schemas import LossConfig, ModelConfig
from app.services.pignn_service import (
    STORAGE_EMBED,
    GcnLayer,
    check_scaled_inputs,
    ensemble_predict,
    extract_connectivity,
    forward,
    forward_params,
    gcn_aggregate,
    gcn_forward,
    init_model,
    load_checkpoint,
    loss_terms,
    make_batch,
    normalize_adjacency,
    physics_residual,
    predict,
    save_checkpoint,
    scale_inputs,
    total_loss,
)
from app.services.preprocessing_service import split_panel
from app.utils.error_handling import ValidationError

SMALL = ModelConfig(graph_mode="self_learned", gcn_width=4, head_width=8)


def _model(panel, config=SMALL, adjacency=None, seed=0):
    return init_model(panel, split_panel(panel).train, config, adjacency=adjacency, seed=seed)


def _permute_params(model, order):
    """Reorder the producer-indexed parameter blocks."""
    params = np.array(model.params)
    for name, (lo, hi, shape) in model.layout.offsets().items():
        block = params[lo:hi].reshape(shape)
        if name in ("gcn_I.b", "gcn_pI.b", STORAGE_EMBED):
            params[lo:hi] = block[order].ravel()
        elif name == "F_raw":
            params[lo:hi] = block[:, order].ravel()
    return params


class TestGcnLayer:
    def test_normalized_aggregation(self):
        """One injector feeding two producers: 4 / sqrt(2) at each."""
        A_hat = normalize_adjacency(np.array([[1.0, 1.0]]))
        out = gcn_aggregate(np.array([[4.0]]), A_hat)
        np.testing.assert_allclose(out, [[4.0 / math.sqrt(2.0)] * 2])

    def test_combine_then_project(self):
        """Linear activation, W = [1, 1]^T and features (3, 2) give 5."""
        layer = GcnLayer(W=np.array([[1.0], [1.0]]), activation="linear")
        out = gcn_forward(layer, np.array([[3.0]]), np.array([[2.0]]), np.array([[1.0]]))
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == pytest.approx(5.0)

    def test_zero_injector_features_ignore_the_graph(self):
        rng = np.random.default_rng(0)
        layer = GcnLayer(W=rng.normal(size=(2, 3)))
        H_I = np.zeros((5, 2))
        H_P = rng.normal(size=(5, 3))
        a = gcn_forward(layer, H_I, H_P, np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
        b = gcn_forward(layer, H_I, H_P, np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 0.0]]))
        np.testing.assert_allclose(a, b)

    def test_zero_degree_clamped(self):
        A_hat = normalize_adjacency(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert np.all(np.isfinite(A_hat))
        assert A_hat[0, 0] == 1.0

    def test_shape_mismatch_rejected(self):
        layer = GcnLayer(W=np.ones((2, 1)))
        with pytest.raises(ValidationError):
            gcn_forward(layer, np.ones((4, 2)), np.ones((4, 3)), np.ones((3, 3)))


class TestForward:
    def test_head_shapes(self, crm_world):
        _, panel = crm_world
        model = _model(panel)
        out = forward(model, scale_inputs(model, panel))
        for head in (out.q, out.p_wf, out.J, out.V_p):
            assert np.asarray(head).shape == (panel.n_rows, panel.n_producers)

    def test_zero_parameters_give_constant_output(self, crm_world):
        _, panel = crm_world
        model = _model(panel)
        out = forward_params(model, np.zeros(model.layout.size), scale_inputs(model, panel))
        q = np.asarray(out.q)
        assert np.all(np.isfinite(q))
        assert np.all(q == q[0, 0])

    def test_productivity_and_volume_positive(self, crm_world):
        _, panel = crm_world
        model = _model(panel)
        inputs = scale_inputs(model, panel)
        rng = np.random.default_rng(1)
        for _ in range(200):
            out = forward_params(model, rng.normal(scale=5.0, size=model.layout.size), inputs)
            assert np.all(np.asarray(out.J) > 0)
            assert np.all(np.asarray(out.V_p) > 0)

    def test_per_producer_storage_is_constant_in_time(self, crm_world):
        _, panel = crm_world
        model = _model(panel)
        out = predict(model, panel)
        for values in (out.J, out.V_p):
            assert np.all(values == values[0])
        assert len(set(out.J[0].tolist())) == panel.n_producers

    def test_time_varying_storage_reads_the_graph_features(self, crm_world):
        _, panel = crm_world
        model = _model(panel, SMALL.model_copy(update={"storage": "time_varying"}))
        assert STORAGE_EMBED not in model.layout.names()
        out = predict(model, panel)
        assert out.J.shape == (panel.n_rows, panel.n_producers)
        assert not np.all(out.J == out.J[0])

    def test_storage_heads_carry_no_time_tangent(self, crm_world):
        _, panel = crm_world
        model = _model(panel)
        batch = make_batch(model, panel, split_panel(panel).train)
        out = forward_params(model, model.params, batch.inputs, t=seed_time(batch.inputs.t))
        assert isinstance(out.q, Dual)
        assert not isinstance(out.J, Dual) and not isinstance(out.V_p, Dual)

    def test_unscaled_inputs_flagged(self, crm_world):
        _, panel = crm_world
        model = _model(panel)
        inputs = make_batch(model, panel, split_panel(panel).train).inputs
        assert check_scaled_inputs(inputs)
        far = inputs.__class__(t=inputs.t * 10.0, I=inputs.I, p_I=inputs.p_I)
        assert not check_scaled_inputs(far)

    def test_producer_permutation_equivariance(self, crm_world):
        """Reordering producers (bias rows and F columns included) reorders the outputs."""
        _, panel = crm_world
        order = [2, 0, 1]
        model = _model(panel)
        permuted_panel = panel.permute_producers(order)
        permuted = _model(permuted_panel).with_params(_permute_params(model, order))
        np.testing.assert_allclose(predict(permuted, permuted_panel).q, predict(model, panel).q[:, order],
                                   rtol=1e-10)

    def test_expert_mode_needs_adjacency(self, crm_world):
        _, panel = crm_world
        with pytest.raises(ValidationError):
            _model(panel, SMALL.model_copy(update={"graph_mode": "expert"}))

    def test_expert_mode_uses_prior(self, crm_world):
        _, panel = crm_world
        A = AdjacencyMatrix(values=[[1, 1, 0], [0, 1, 1]], injector_ids=panel.injector_ids,
                            producer_ids=panel.producer_ids)
        model = _model(panel, SMALL.model_copy(update={"graph_mode": "expert"}), adjacency=A)
        assert np.array_equal(model.adjacency, A.values)
        assert predict(model, panel).q.shape == panel.q.shape


class TestPhysicsResidual:
    def test_steady_state(self):
        I = np.array([[200.0, 100.0]])
        F = np.array([[0.5, 0.2], [0.3, 0.6]])
        q = I @ F
        r = physics_residual(q, np.full((1, 2), 1000.0), np.ones((1, 2)), np.full((1, 2), 5e6),
                             np.zeros((1, 2)), np.zeros((1, 2)), I, F, 1e-5)
        np.testing.assert_allclose(r, 0.0, atol=1e-12)

    def test_primary_depletion(self):
        """q = q0 exp(-t / tau) with C_t V_p / J = tau."""
        tau, J, c_t, q0 = 40.0, 2.0, 1e-5, 300.0
        t = np.linspace(0.0, 100.0, 11)[:, None]
        q = q0 * np.exp(-t / tau)
        r = physics_residual(q, np.full_like(q, 1000.0), np.full_like(q, J), np.full_like(q, tau * J / c_t),
                             -q / tau, np.zeros_like(q), np.zeros((11, 1)), np.zeros((1, 1)), c_t)
        np.testing.assert_allclose(r, 0.0, atol=1e-10)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(2)
        q, p, J, Vp, dq, dp = (rng.uniform(0.5, 2.0, size=(4, 3)) for _ in range(6))
        I = rng.uniform(0.0, 5.0, size=(4, 2))
        F = rng.uniform(0.0, 1.0, size=(2, 3))
        c_t = 0.3
        expected = (c_t * Vp / J) * dq + q + c_t * Vp * dp - I @ F
        np.testing.assert_allclose(physics_residual(q, p, J, Vp, dq, dp, I, F, c_t), expected, rtol=1e-14)

    def test_vanishes_on_crm_world_with_generating_parameters(self, crm_world):
        params, panel = crm_world
        c_t = 1e-5
        dt = np.diff(panel.times)[:, None]
        slope = np.diff(panel.p_wf, axis=0) / dt
        forcing = panel.I[1:] @ params.F.values - params.tau * params.J * slope
        q = panel.q[1:]
        dq_dt = (forcing - q) / params.tau
        shape = q.shape
        r = physics_residual(q, panel.p_wf[1:], np.broadcast_to(params.J, shape),
                             np.broadcast_to(params.pore_volume(c_t), shape), dq_dt, slope,
                             panel.I[1:], params.F.values, c_t)
        assert np.max(np.abs(r)) < 1e-8 * np.mean(panel.q)

    def test_tiny_productivity_rejected(self):
        with pytest.raises(ValidationError):
            physics_residual(np.ones((1, 1)), np.ones((1, 1)), np.full((1, 1), 1e-14), np.ones((1, 1)),
                             np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), 1e-5)


class TestLoss:
    def _setup(self, panel):
        model = _model(panel)
        batch = make_batch(model, panel, split_panel(panel).train)
        return model, batch

    def test_baseline_is_supervised_mse(self, crm_world):
        _, panel = crm_world
        model, batch = self._setup(panel)
        out = forward_params(model, model.params, batch.inputs)
        mse = np.mean((np.asarray(out.q) - batch.q) ** 2) + np.mean((np.asarray(out.p_wf) - batch.p_wf) ** 2)
        loss = total_loss(model, model.params, batch, LossConfig(lambda_f=0.0))
        assert float(np.asarray(loss)) == pytest.approx(mse, rel=1e-12)

    def test_linear_in_physics_weight(self, crm_world):
        """Doubling lambda_f adds exactly L_f."""
        _, panel = crm_world
        model, batch = self._setup(panel)
        terms = loss_terms(model, model.params, batch, LossConfig())
        one = float(np.asarray(total_loss(model, model.params, batch, LossConfig(lambda_f=1.0))))
        two = float(np.asarray(total_loss(model, model.params, batch, LossConfig(lambda_f=2.0))))
        assert two - one == pytest.approx(float(np.asarray(terms["f"])), rel=1e-9)

    def test_physics_flag_drops_residual(self, crm_world):
        _, panel = crm_world
        model, batch = self._setup(panel)
        assert "f" not in loss_terms(model, model.params, batch, LossConfig(), physics=False)

    def test_full_loss_gradient_matches_finite_differences(self):
        """N_I = 2, N_P = 4, 50 rows, every parameter including F."""
        from app.services.synth_service import random_crm_world

        _, panel = random_crm_world(2, 4, 50, seed=0)
        model = _model(panel)
        batch = make_batch(model, panel, range(0, panel.n_rows))
        result = gradcheck(lambda p: total_loss(model, p, batch, LossConfig()), model.params, h=1e-5)
        assert result.passed(1e-4), result.max_relative_error

    def test_mixed_derivative_of_rate_head(self):
        from app.services.synth_service import random_crm_world

        _, panel = random_crm_world(2, 4, 50, seed=0)
        model = _model(panel)
        batch = make_batch(model, panel, range(0, panel.n_rows))
        result = mixed_gradcheck(lambda p, t: forward_params(model, p, batch.inputs, t=t).q,
                                 model.params, batch.inputs.t)
        assert result.passed(1e-3), result.max_relative_error


class TestEnsembleAndConnectivity:
    def test_identical_members(self, crm_world):
        _, panel = crm_world
        model = _model(panel)
        np.testing.assert_allclose(ensemble_predict([model, model], panel), predict(model, panel).q)

    def test_mean_lies_in_member_envelope(self, crm_world):
        _, panel = crm_world
        members = [_model(panel, seed=s) for s in range(3)]
        preds = np.stack([predict(m, panel).q for m in members])
        mean = ensemble_predict(members, panel)
        assert np.all(mean >= preds.min(axis=0) - 1e-12)
        assert np.all(mean <= preds.max(axis=0) + 1e-12)

    def test_empty_ensemble_rejected(self, crm_world):
        _, panel = crm_world
        with pytest.raises(ValidationError):
            ensemble_predict([], panel)

    def test_mixed_architectures_rejected(self, crm_world):
        _, panel = crm_world
        a = _model(panel)
        b = _model(panel, SMALL.model_copy(update={"head_width": 4}))
        with pytest.raises(ValidationError):
            ensemble_predict([a, b], panel)

    def test_logistic_squashing(self, crm_world):
        _, panel = crm_world
        model = _model(panel)
        lo, hi, shape = model.layout.offsets()["F_raw"]
        params = np.array(model.params)
        params[lo:hi] = 0.0
        assert np.all(extract_connectivity(model.with_params(params)).values == 0.5)
        params[lo:hi] = [50.0, -50.0, 50.0, -50.0, 50.0, -50.0]
        F = extract_connectivity(model.with_params(params)).values
        assert F[0, 0] == pytest.approx(1.0) and F[0, 1] == pytest.approx(0.0, abs=1e-20)

    def test_checkpoint_round_trip(self, crm_world, tmp_path):
        _, panel = crm_world
        model = _model(panel, seed=4)
        restored = load_checkpoint(save_checkpoint(model, tmp_path / "seed_4.json"))
        assert restored.seed == 4
        np.testing.assert_allclose(predict(restored, panel).q, predict(model, panel).q, rtol=1e-12)
