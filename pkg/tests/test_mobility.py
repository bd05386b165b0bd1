import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from irsnoma import mobility
from irsnoma.mobility import (
    AcceptRejectSampler,
    LstmNetwork,
    LstmTrainConfig,
    Region,
    Trajectory,
    denormalize_trajectories,
    lstm_forward,
    lstm_train,
    normalize_trajectories,
    predict_positions,
    sample_initial_positions,
    simulate_true_motion,
    trajectories_from_csv,
    trajectories_to_csv,
)
from irsnoma.numerics import SeededRng


def _unit_region(density="uniform"):
    return Region(0.0, 1.0, 0.0, 1.0, density_fn_id=density)


class TestSampler:
    def test_uniform_accepts_everything(self):
        sampler = AcceptRejectSampler(_unit_region(), 1.0, SeededRng(0))
        pts = sample_initial_positions(sampler, 50)
        assert len(pts) == 50
        assert sampler.acceptance_rate == 1.0
        assert all(flag == 1 for flag in sampler.audit)

    def test_rejects_zero_users(self):
        sampler = AcceptRejectSampler(_unit_region(), 1.0, SeededRng(0))
        with pytest.raises(ValueError):
            sample_initial_positions(sampler, 0)

    def test_envelope_violation_detected(self):
        sampler = AcceptRejectSampler(_unit_region(), 0.5, SeededRng(0))
        with pytest.raises(ValueError, match="envelope"):
            sample_initial_positions(sampler, 5)

    def test_points_inside_region(self):
        region = Region(2.0, 5.0, -1.0, 4.0)
        sampler = AcceptRejectSampler(region, 1.0, SeededRng(3))
        pts = sample_initial_positions(sampler, 200)
        arr = np.array([[p.x, p.y] for p in pts])
        assert np.all(region.contains(arr))

    def test_uniformity_chi_square(self):
        # Smaller sibling of the acceptance-gate check.
        sampler = AcceptRejectSampler(_unit_region(), 1.0, SeededRng(7))
        pts = sample_initial_positions(sampler, 20_000)
        arr = np.array([[p.x, p.y] for p in pts])
        counts, _, _ = np.histogram2d(arr[:, 0], arr[:, 1], bins=5, range=[[0, 1], [0, 1]])
        _, p_value = stats.chisquare(counts.ravel())
        assert p_value > 0.01

    def test_nonuniform_density_concentrates(self):
        sampler = AcceptRejectSampler(_unit_region("gaussian_center"), 1.0, SeededRng(9))
        pts = sample_initial_positions(sampler, 4000)
        arr = np.array([[p.x, p.y] for p in pts])
        # Some rejections must occur, and the middle must out-populate a corner.
        assert 0.0 < sampler.acceptance_rate < 1.0
        center = np.sum(np.max(np.abs(arr - 0.5), axis=1) < 0.1)
        corner = np.sum((arr[:, 0] < 0.2) & (arr[:, 1] < 0.2))
        assert center > corner

    def test_determinism(self):
        a = sample_initial_positions(AcceptRejectSampler(_unit_region(), 1.0, SeededRng(4)), 20)
        b = sample_initial_positions(AcceptRejectSampler(_unit_region(), 1.0, SeededRng(4)), 20)
        assert [(p.x, p.y) for p in a] == [(p.x, p.y) for p in b]


class TestTrueMotion:
    def test_tiny_steps_stay_put(self):
        region = _unit_region()
        starts = sample_initial_positions(AcceptRejectSampler(region, 1.0, SeededRng(1)), 5)
        trajs = simulate_true_motion(starts, region, 4, 1e-15, SeededRng(2))
        for traj, start in zip(trajs, starts):
            assert len(traj) == 5
            assert np.max(np.abs(traj.positions - [start.x, start.y])) < 1e-12

    def test_step_standard_deviation(self):
        region = Region(-1000.0, 1000.0, -1000.0, 1000.0)
        starts = [mobility.Position(0.0, 0.0)] * 10_000
        trajs = simulate_true_motion(starts, region, 1, 0.5, SeededRng(5))
        steps = np.array([t.positions[1] - t.positions[0] for t in trajs])
        assert np.std(steps) == pytest.approx(0.5, rel=0.03)

    @given(st.integers(0, 2**31 - 1), st.floats(0.05, 5.0))
    @settings(max_examples=30, deadline=None)
    def test_reflection_keeps_walk_inside(self, seed, step_std):
        region = Region(0.0, 2.0, 0.0, 2.0)
        starts = [mobility.Position(1.0, 1.0), mobility.Position(0.1, 1.9)]
        trajs = simulate_true_motion(starts, region, 12, step_std, SeededRng(seed))
        for traj in trajs:
            assert np.all(region.contains(traj.positions))

    def test_rejects_bad_std(self):
        with pytest.raises(ValueError):
            simulate_true_motion([mobility.Position(0.5, 0.5)], _unit_region(), 2, 0.0, SeededRng(0))

    def test_determinism(self):
        region = _unit_region()
        starts = [mobility.Position(0.3, 0.3)]
        a = simulate_true_motion(starts, region, 6, 0.2, SeededRng(11))
        b = simulate_true_motion(starts, region, 6, 0.2, SeededRng(11))
        assert np.array_equal(a[0].positions, b[0].positions)


def _tiny_net(hidden=3, seed=0):
    return LstmNetwork.initialize(hidden, SeededRng(seed).substream("lstm-init"))


def _oracle_forward_scalar(net, seq):
    """Independent per-element reimplementation of the recurrence."""
    h = net.hidden_size
    r = [0.0] * h
    c = [0.0] * h

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    preds = []
    for x in seq:
        gi, gf, go, cand, c_new, r_new = [], [], [], [], [], []
        for u in range(h):
            ai = sum(net.w_i[u][d] * x[d] for d in range(2)) + sum(
                net.v_i[u][v] * r[v] for v in range(h)
            ) + net.b_i[u]
            af = sum(net.w_f[u][d] * x[d] for d in range(2)) + sum(
                net.v_f[u][v] * r[v] for v in range(h)
            ) + net.b_f[u]
            ao = sum(net.w_o[u][d] * x[d] for d in range(2)) + sum(
                net.v_o[u][v] * r[v] for v in range(h)
            ) + net.b_o[u]
            ac = sum(net.w_c[u][d] * x[d] for d in range(2)) + sum(
                net.v_c[u][v] * r[v] for v in range(h)
            )
            gi.append(sig(ai))
            gf.append(sig(af))
            go.append(sig(ao))
            cand.append(math.tanh(ac))
        for u in range(h):
            c_new.append(gf[u] * c[u] + gi[u] * cand[u])
            r_new.append(go[u] * math.tanh(c_new[u]))
        r, c = r_new, c_new
        preds.append(
            [
                sum(net.w_out[o][u] * r[u] for u in range(h)) + net.b_out[o]
                for o in range(2)
            ]
        )
    return np.array(preds[-1])


class TestLstmForward:
    def test_zero_weights_predict_output_bias(self):
        net = _tiny_net()
        for name in mobility._WEIGHT_NAMES:
            getattr(net, name)[...] = 0.0
        net.b_out[...] = [0.25, -0.5]
        _, pred = lstm_forward(net, np.array([[0.3, 0.7], [0.6, 0.1]]))
        assert np.allclose(pred, [0.25, -0.5], atol=1e-12)

    def test_first_step_cell_state(self):
        # With c_0 = 0 the first cell state is the gated candidate alone.
        net = _tiny_net(hidden=4, seed=3)
        x = np.array([[0.2, 0.9]])
        out = mobility._forward_seq(net, x[:, None, :])
        st0 = out["steps"][0]
        assert np.allclose(st0["c"], st0["gi"] * st0["cand"], atol=1e-12)

    def test_matches_scalar_oracle(self):
        net = _tiny_net(hidden=4, seed=8)
        seq = SeededRng(12).uniform(0, 1, (5, 2))
        _, pred = lstm_forward(net, seq)
        assert np.allclose(pred, _oracle_forward_scalar(net, seq), atol=1e-10)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            lstm_forward(_tiny_net(), np.ones((3,)))

    def test_hidden_stack_shape(self):
        net = _tiny_net(hidden=6)
        hidden, pred = lstm_forward(net, np.ones((4, 2)) * 0.5)
        assert hidden.shape == (4, 6)
        assert pred.shape == (2,)


class TestLstmGradients:
    def test_bptt_matches_finite_differences(self):
        net = _tiny_net(hidden=3, seed=5)
        rng = SeededRng(17)
        x = rng.uniform(0, 1, (4, 2, 2))
        targets = rng.uniform(0, 1, (4, 2, 2))
        _, grads = mobility._loss_and_grads(net, x, targets)
        eps = 1e-6
        for name in mobility._WEIGHT_NAMES:
            w = getattr(net, name)
            numeric = np.zeros_like(w)
            for idx in np.ndindex(w.shape):
                w[idx] += eps
                lp, _ = mobility._loss_and_grads(net, x, targets)
                w[idx] -= 2 * eps
                lm, _ = mobility._loss_and_grads(net, x, targets)
                w[idx] += eps
                numeric[idx] = (lp - lm) / (2 * eps)
            denom = np.maximum(np.abs(numeric), 1e-8)
            rel = np.abs(grads[name] - numeric) / denom
            mask = np.abs(numeric) > 1e-8
            assert np.all(rel[mask] < 1e-4), f"gradient mismatch in {name}"


class TestLstmTrain:
    def test_zero_epochs_returns_input(self):
        net = _tiny_net()
        trajs = [Trajectory(0, np.full((4, 2), 0.5))]
        out = lstm_train(net, trajs, LstmTrainConfig(epochs=0, hidden_size=3))
        assert out is net

    def test_constant_task_converges(self):
        net = _tiny_net(hidden=8, seed=2)
        trajs = [Trajectory(i, np.tile([0.4, 0.6], (6, 1))) for i in range(3)]
        # Full-batch steps are small; give the schedule room to finish.
        cfg = LstmTrainConfig(epochs=700, hidden_size=8, lr_drop_epoch=500)
        trained = lstm_train(net, trajs, cfg)
        assert trained.loss_history[-1] < 1e-5
        # Input net untouched by training.
        assert net.loss_history == []

    def test_window_means_non_increasing_on_constant_task(self):
        net = _tiny_net(hidden=6, seed=4)
        trajs = [Trajectory(0, np.tile([0.3, 0.8], (5, 1)))]
        cfg = LstmTrainConfig(epochs=300, hidden_size=6)
        trained = lstm_train(net, trajs, cfg)
        losses = np.array(trained.loss_history)
        windows = [losses[i : i + 50].mean() for i in range(0, 300, 50)]
        assert all(b <= a + 1e-12 for a, b in zip(windows, windows[1:]))

    def test_learning_rate_drop_applied(self):
        # Indirect check: training is stable and loss history has cfg.epochs entries.
        net = _tiny_net(hidden=4)
        trajs = [Trajectory(0, np.tile([0.5, 0.5], (4, 1)))]
        cfg = LstmTrainConfig(epochs=40, hidden_size=4, lr_drop_epoch=20)
        trained = lstm_train(net, trajs, cfg)
        assert len(trained.loss_history) == 40

    def test_unequal_lengths_rejected(self):
        net = _tiny_net()
        trajs = [Trajectory(0, np.ones((3, 2)) * 0.5), Trajectory(1, np.ones((4, 2)) * 0.5)]
        with pytest.raises(ValueError, match="length"):
            lstm_train(net, trajs, LstmTrainConfig(epochs=1, hidden_size=3))

    def test_divergence_raises(self):
        net = _tiny_net()
        net.b_out[...] = 1e300
        trajs = [Trajectory(0, np.full((3, 2), 0.5))]
        with pytest.raises(RuntimeError, match="diverged"):
            lstm_train(net, trajs, LstmTrainConfig(epochs=1, hidden_size=3))


class TestPredictPositions:
    def test_one_prediction_per_user(self):
        net = _tiny_net(hidden=4)
        hist = [Trajectory(i, SeededRng(i).uniform(0.2, 0.8, (4, 2))) for i in range(3)]
        cfg = LstmTrainConfig(epochs=8, hidden_size=4, lr_drop_epoch=4)
        preds, _ = predict_positions(net, hist, 1, cfg)
        assert len(preds) == 3
        assert all(len(p) == 1 for p in preds)

    def test_static_users_predicted_close(self):
        point = np.array([0.45, 0.55])
        hist = [Trajectory(i, np.tile(point, (6, 1))) for i in range(4)]
        net = LstmNetwork.initialize(8, SeededRng(6).substream("init"))
        cfg = LstmTrainConfig(epochs=300, hidden_size=8)
        net = lstm_train(net, hist, cfg)
        preds, _ = predict_positions(net, hist, 3, cfg)
        for traj in preds:
            assert np.max(np.abs(traj.positions - point)) < 0.05

    def test_retrain_count_equals_slots(self, monkeypatch):
        calls = []
        real_train = mobility.lstm_train

        def spy(net, trajs, cfg):
            calls.append(cfg.epochs)
            return real_train(net, trajs, cfg)

        monkeypatch.setattr(mobility, "lstm_train", spy)
        net = _tiny_net(hidden=3)
        hist = [Trajectory(0, np.full((4, 2), 0.5))]
        cfg = LstmTrainConfig(epochs=12, hidden_size=3, lr_drop_epoch=6)
        predict_positions(net, hist, 4, cfg)
        assert len(calls) == 4
        assert all(e == cfg.effective_retrain_epochs for e in calls)

    def test_predictions_stay_in_unit_square(self):
        net = _tiny_net(hidden=5, seed=9)
        hist = [Trajectory(0, SeededRng(3).uniform(0, 1, (5, 2)))]
        cfg = LstmTrainConfig(epochs=4, hidden_size=5, lr_drop_epoch=2)
        preds, _ = predict_positions(net, hist, 5, cfg)
        assert np.all(preds[0].positions >= 0.0) and np.all(preds[0].positions <= 1.0)

    def test_rejects_zero_slots(self):
        with pytest.raises(ValueError):
            predict_positions(_tiny_net(), [Trajectory(0, np.ones((3, 2)))], 0,
                              LstmTrainConfig(epochs=1, hidden_size=3))


class TestRegionAndIo:
    def test_normalize_roundtrip(self):
        region = Region(2.0, 6.0, -3.0, 1.0)
        pts = SeededRng(8).uniform(0, 1, (10, 2))
        metres = region.denormalize(pts)
        back = region.normalize(metres)
        assert np.allclose(back, pts, atol=1e-12)

    def test_csv_roundtrip(self, tmp_path):
        trajs = [Trajectory(i, SeededRng(i).uniform(0, 2, (4, 2))) for i in range(3)]
        path = tmp_path / "walks.csv"
        trajectories_to_csv(trajs, str(path))
        loaded = trajectories_from_csv(str(path))
        assert len(loaded) == 3
        for a, b in zip(trajs, loaded):
            assert a.user_id == b.user_id
            assert np.allclose(a.positions, b.positions, rtol=1e-5)

    def test_bad_region(self):
        with pytest.raises(ValueError):
            Region(1.0, 1.0, 0.0, 2.0)

    def test_unknown_density(self):
        with pytest.raises(ValueError):
            Region(0, 1, 0, 1, density_fn_id="nope")
