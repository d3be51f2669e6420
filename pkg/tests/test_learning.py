import numpy as np
import pytest

from comfortnav.learning import (RegressorModel, TrainConfig, batch_loss_and_grads,
                                 load_model, loss, predict, save_model, smooth_l1,
                                 spectrum_mse, train, write_train_log)


def tiny_dataset(rng, n=12, fdim=6, sdim=9):
    features = rng.uniform(-1, 1, size=(n, fdim))
    spectra = rng.uniform(0, 0.3, size=(n, sdim))
    costs = rng.uniform(0, 1, size=n)
    return features, spectra, costs


class TestLossUnits:
    def test_smooth_l1_values(self):
        assert smooth_l1(0.0) == 0.0
        assert smooth_l1(0.5) == 0.125
        assert smooth_l1(2.0) == 1.5
        assert smooth_l1(-0.5) == 0.125
        assert smooth_l1(-2.0) == 1.5

    def test_smooth_l1_slope_matches_at_one(self):
        eps = 1e-7
        inner = (smooth_l1(1.0) - smooth_l1(1.0 - eps)) / eps
        outer = (smooth_l1(1.0 + eps) - smooth_l1(1.0)) / eps
        assert inner == pytest.approx(1.0, abs=1e-6)
        assert outer == pytest.approx(1.0, abs=1e-6)

    def test_combined_loss(self):
        zero = np.zeros(5)
        assert loss(zero, zero, 0.0, 0.0, beta=1.0) == 0.0
        assert loss(zero, zero, 0.5, 0.0, beta=0.0) == 0.125
        assert loss(zero, zero, 2.0, 0.0, beta=0.0) == 1.5

    def test_beta_one_ignores_cost(self):
        rng = np.random.default_rng(0)
        pred = rng.normal(size=7)
        true = rng.normal(size=7)
        resid = pred - true
        expected = float(resid @ resid)
        assert loss(pred, true, 123.0, 0.0, beta=1.0) == expected

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            loss(np.zeros(3), np.zeros(4), 0.0, 0.0, 0.5)
        with pytest.raises(ValueError):
            loss(np.zeros(3), np.zeros(3), np.nan, 0.0, 0.5)
        with pytest.raises(ValueError):
            loss(np.zeros(3), np.zeros(3), 0.0, 0.0, 1.5)

    def test_loss_non_negative(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            v = loss(rng.normal(size=4), rng.normal(size=4),
                     float(rng.normal()), float(rng.normal()),
                     float(rng.uniform()))
            assert v >= 0.0


class TestGradients:
    def test_backprop_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        features, spectra, costs = tiny_dataset(rng, n=5)
        model = RegressorModel.init(6, 9, seed=4)
        beta = 0.4
        _, _, _, grads = batch_loss_and_grads(model, features, spectra, costs,
                                              beta, train_cost_head=True)
        step = 1e-5
        worst = 0.0
        for name, layer in model.params.items():
            for key in layer:
                flat = layer[key].ravel()
                for idx in rng.choice(flat.size, size=min(10, flat.size), replace=False):
                    orig = flat[idx]
                    flat[idx] = orig + step
                    up = batch_loss_and_grads(model, features, spectra, costs,
                                              beta, True)[0]
                    flat[idx] = orig - step
                    down = batch_loss_and_grads(model, features, spectra, costs,
                                                beta, True)[0]
                    flat[idx] = orig
                    fd = (up - down) / (2 * step)
                    bp = grads[name][key].ravel()[idx]
                    rel = abs(fd - bp) / max(abs(fd), abs(bp), 1e-6)
                    worst = max(worst, rel)
        assert worst <= 1e-4


class TestTraining:
    def test_single_sample_loss_decreases(self):
        rng = np.random.default_rng(3)
        features, spectra, costs = tiny_dataset(rng, n=1)
        _, rows = train(features, spectra, costs,
                        TrainConfig(epochs=10, seed=0))
        losses = [r["loss"] for r in rows]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_cost_head_frozen_until_start_epoch(self):
        rng = np.random.default_rng(4)
        features, spectra, costs = tiny_dataset(rng)
        cfg = TrainConfig(epochs=40, cost_decoder_start_epoch=41, seed=6)
        model, rows = train(features, spectra, costs, cfg)
        reference = RegressorModel.init(6, 9, seed=6)
        assert np.array_equal(model.params["cost_head"]["W"],
                              reference.params["cost_head"]["W"])
        assert np.array_equal(model.params["cost_head"]["b"],
                              reference.params["cost_head"]["b"])
        # encoder did move
        assert not np.array_equal(model.params["enc1"]["W"],
                                  reference.params["enc1"]["W"])
        assert all(r["beta"] == 1.0 for r in rows)

    def test_cost_head_moves_after_start(self):
        rng = np.random.default_rng(5)
        features, spectra, costs = tiny_dataset(rng)
        cfg = TrainConfig(epochs=45, cost_decoder_start_epoch=41, seed=6)
        model, rows = train(features, spectra, costs, cfg)
        reference = RegressorModel.init(6, 9, seed=6)
        assert not np.array_equal(model.params["cost_head"]["W"],
                                  reference.params["cost_head"]["W"])
        assert rows[39]["beta"] == 1.0
        assert rows[40]["beta"] == 0.4

    def test_deterministic_training(self):
        rng = np.random.default_rng(6)
        features, spectra, costs = tiny_dataset(rng)
        cfg = TrainConfig(epochs=8, seed=11)
        a, _ = train(features, spectra, costs, cfg)
        b, _ = train(features.copy(), spectra.copy(), costs.copy(), cfg)
        for name in a.params:
            for key in a.params[name]:
                assert np.array_equal(a.params[name][key], b.params[name][key])

    def test_empty_dataset(self):
        with pytest.raises(ValueError, match="empty"):
            train(np.zeros((0, 3)), np.zeros((0, 6)), np.zeros(0), TrainConfig())

    def test_divergence_aborts(self):
        rng = np.random.default_rng(7)
        features, spectra, costs = tiny_dataset(rng)
        cfg = TrainConfig(epochs=60, learning_rate=1e12, seed=0)
        with pytest.raises(RuntimeError, match="diverged"), np.errstate(all="ignore"):
            train(features, spectra, costs, cfg)


class TestPrediction:
    def test_zero_model_predicts_zero_cost(self):
        model = RegressorModel.init(6, 9, seed=0)
        for layer in model.params.values():
            layer["W"][:] = 0.0
            layer["b"][:] = 0.0
        spec, cost = predict(model, np.ones(6))
        assert cost == 0.0
        assert np.allclose(spec, 0.0)

    def test_clamped_to_unit_interval(self):
        model = RegressorModel.init(4, 6, seed=1)
        model.params["cost_head"]["b"][:] = 50.0
        _, cost = predict(model, np.zeros(4))
        assert cost == 1.0
        model.params["cost_head"]["b"][:] = -50.0
        _, cost = predict(model, np.zeros(4))
        assert cost == 0.0

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        model = RegressorModel.init(6, 9, seed=2)
        x = rng.normal(size=6)
        a = predict(model, x)
        b = predict(model, x.copy())
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]

    def test_dimension_mismatch(self):
        model = RegressorModel.init(6, 9, seed=3)
        with pytest.raises(ValueError, match="length"):
            predict(model, np.zeros(5))


class TestSpectrumMse:
    def test_exact_predictions(self):
        model = RegressorModel.init(3, 6, seed=0)
        feats = np.zeros((4, 3))
        spec, _ = predict(model, feats)
        assert spectrum_mse(model, feats, spec) == 0.0

    def test_constant_unit_error(self):
        model = RegressorModel.init(3, 6, seed=0)
        for layer in model.params.values():
            layer["W"][:] = 0.0
            layer["b"][:] = 0.0
        feats = np.zeros((5, 3))
        targets = np.ones((5, 6))
        assert spectrum_mse(model, feats, targets) == pytest.approx(1.0)

    def test_double_loop_oracle(self):
        rng = np.random.default_rng(9)
        model = RegressorModel.init(4, 12, seed=5)
        feats = rng.normal(size=(7, 4))
        targets = rng.uniform(size=(7, 12))
        pred, _ = predict(model, feats)
        bins = 4
        total = 0.0
        for axis in range(3):
            acc = 0.0
            for i in range(7):
                for b in range(bins):
                    acc += (pred[i, axis * bins + b] - targets[i, axis * bins + b]) ** 2
            total += acc / (7 * bins)
        assert spectrum_mse(model, feats, targets) == pytest.approx(total / 3, abs=1e-12)


class TestPersistence:
    def test_model_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(10)
        features, spectra, costs = tiny_dataset(rng)
        model, _ = train(features, spectra, costs, TrainConfig(epochs=3, seed=1))
        save_model(model, tmp_path / "m.json", TrainConfig(epochs=3, seed=1))
        back = load_model(tmp_path / "m.json")
        for name in model.params:
            for key in model.params[name]:
                assert np.array_equal(back.params[name][key], model.params[name][key])

    def test_train_log_rows(self, tmp_path):
        rng = np.random.default_rng(11)
        features, spectra, costs = tiny_dataset(rng)
        _, rows = train(features, spectra, costs, TrainConfig(epochs=5, seed=2))
        write_train_log(tmp_path / "log.csv", rows)
        lines = (tmp_path / "log.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,beta,loss,l2_term,smooth_l1_term"
        assert len(lines) == 6
