import math
import time

import numpy as np
import pytest

from silatent import net
from silatent.errors import CorruptModelError, ModelVersionError


def toy_bundle(regime="proposed", seed=0, input_dim=10, latent_dim=3):
    """Small bundle (<=16 hidden units) with every activation kind exercised."""
    enc = net.xavier_init(
        [net.LayerSpec(input_dim, 8, "relu"), net.LayerSpec(8, latent_dim, "relu")],
        seed)
    dec = net.xavier_init(
        [net.LayerSpec(latent_dim, 8, "relu"),
         net.LayerSpec(8, input_dim, "scaled_tanh_1_5")],
        seed + 1)
    cls = [] if regime == "baseline1" else net.xavier_init(
        [net.LayerSpec(latent_dim, 1, "sigmoid")], seed + 2)
    return net.ModelBundle(enc, dec, cls, latent_dim, regime)


def fd_gradients(bundle, x, y, loss_spec, h=1e-5):
    """Central finite differences of the batch loss over every parameter."""
    out = []
    for p in bundle.parameters():
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = net.loss_value(bundle, x, y, loss_spec)
            flat[i] = orig - h
            down = net.loss_value(bundle, x, y, loss_spec)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def assert_grads_close(analytic, numeric, rtol=1e-4):
    for ga, gn in zip(analytic, numeric):
        mask = np.abs(gn) > 1e-8
        if mask.any():
            rel = np.abs(ga[mask] - gn[mask]) / np.abs(gn[mask])
            assert rel.max() < rtol, f"max relative error {rel.max():.3e}"
        assert np.allclose(ga[~mask], gn[~mask], atol=1e-6)


class TestXavierInit:
    def test_bound_100_to_512(self):
        layers = net.xavier_init([net.LayerSpec(100, 512, "relu")], 7)
        bound = math.sqrt(6.0 / 612)
        assert abs(bound - 0.0990) < 1e-3
        assert np.all(np.abs(layers[0].W) <= bound)

    def test_deterministic(self):
        a = net.xavier_init([net.LayerSpec(5, 4, "relu")], 3)
        b = net.xavier_init([net.LayerSpec(5, 4, "relu")], 3)
        assert np.array_equal(a[0].W, b[0].W)

    def test_biases_zero(self):
        layers = net.xavier_init([net.LayerSpec(5, 4, "relu")], 3)
        assert np.all(layers[0].b == 0.0)


class TestForward:
    def test_output_ranges(self):
        bundle = net.build_bundle("proposed", 0)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(8, 100))
        z, x_hat, y_hat = net.forward(bundle, x)
        assert z.shape == (8, 11)
        assert np.all(z >= 0.0)  # final encoder activation is ReLU
        assert np.all(np.abs(x_hat) <= 1.5)
        assert np.all((y_hat > 0.0) & (y_hat < 1.0))

    def test_zero_classifier_gives_half(self):
        bundle = toy_bundle()
        bundle.classifier[0].W[:] = 0.0
        bundle.classifier[0].b[:] = 0.0
        _, _, y_hat = net.forward(bundle, np.ones(10))
        assert y_hat == 0.5

    def test_dimension_mismatch(self):
        bundle = toy_bundle()
        with pytest.raises(ValueError):
            net.forward(bundle, np.ones(7))


class TestGradients:
    @pytest.mark.parametrize("loss_spec,y", [
        ("proposed", [1.0, 0.0, 1.0]),
        (("baseline1", 1e-2), [1.0, 0.0, 1.0]),
        ("baseline2", [0.0, 1.0, 0.0]),
        ("invalid_only", [0.0, 1.0, 0.0]),
    ])
    def test_matches_finite_differences(self, loss_spec, y):
        regime = loss_spec[0] if isinstance(loss_spec, tuple) else loss_spec
        bundle = toy_bundle(regime, seed=4)
        rng = np.random.default_rng(11)
        x = rng.normal(scale=0.8, size=(3, 10))
        y = np.array(y)
        grads, _ = net.backward(bundle, x, y, loss_spec)
        analytic = net.flatten_grads(bundle, grads)
        numeric = fd_gradients(bundle, x, y, loss_spec)
        assert_grads_close(analytic, numeric)

    def test_proposed_invalid_batch_has_zero_classifier_grads(self):
        bundle = toy_bundle("proposed")
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 10))
        grads, _ = net.backward(bundle, x, np.zeros(4), "proposed")
        for dW, db in grads["classifier"]:
            assert np.all(dW == 0.0)
            assert np.all(db == 0.0)

    def test_minimum_has_vanishing_gradients(self):
        # exact identity autoencoder + saturated correct classifier
        enc = [net.Layer(np.eye(4), np.zeros(4), "linear")]
        dec = [net.Layer(np.eye(4), np.zeros(4), "linear")]
        cls = [net.Layer(np.zeros((1, 4)), np.full(1, 40.0), "sigmoid")]
        bundle = net.ModelBundle(enc, dec, cls, 4, "proposed")
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 4))
        grads, stats = net.backward(bundle, x, np.ones(2), "proposed")
        assert stats["mean_total_loss"] < 1e-12
        for group in grads.values():
            for dW, db in group:
                assert np.abs(dW).max() < 1e-12
                assert np.abs(db).max() < 1e-12


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = [np.array([1.0, 2.0])]
        state = net.AdamState.for_params(p)
        before = p[0].copy()
        net.adam_step(state, p, [np.zeros(2)], lr=0.05)
        assert np.array_equal(p[0], before)

    def test_first_step_hand_computed(self):
        p = [np.array([0.0])]
        state = net.AdamState.for_params(p)
        net.adam_step(state, p, [np.array([1.0])], lr=0.05)
        # m_hat = 1, v_hat = 1 -> update = -lr / (1 + eps)
        expected = -0.05 / (1.0 + 1e-8)
        assert abs(p[0][0] - expected) < 1e-12

    def test_deterministic_trajectories(self):
        def run():
            rng = np.random.default_rng(5)
            p = [rng.normal(size=(3, 3))]
            state = net.AdamState.for_params(p)
            for t in range(20):
                g = [np.sin(p[0]) + t]
                net.adam_step(state, p, g, lr=0.01)
            return p[0]

        assert np.array_equal(run(), run())

    def test_shape_mismatch(self):
        p = [np.zeros(3)]
        state = net.AdamState.for_params(p)
        with pytest.raises(ValueError):
            net.adam_step(state, p, [np.zeros(4)], lr=0.1)


class TestLrSchedule:
    def test_values(self):
        assert net.lr_schedule(0) == 0.05
        assert net.lr_schedule(1) == pytest.approx(0.0375)
        assert net.lr_schedule(2) == pytest.approx(0.028125)

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            net.lr_schedule(-1)


class TestEncoderJacobian:
    def test_single_linear_layer(self):
        W = np.array([[1.0, 2.0], [3.0, 4.0]])
        enc = [net.Layer(W.copy(), np.zeros(2), "linear")]
        dec = [net.Layer(np.ones((2, 2)), np.zeros(2), "linear")]
        bundle = net.ModelBundle(enc, dec, [], 2, "baseline1")
        got = net.encoder_jacobian_frobenius_sq(bundle, np.array([0.5, -0.5]))
        assert got == pytest.approx(np.sum(W ** 2))

    def test_matches_finite_differences(self):
        bundle = toy_bundle("baseline1", seed=6)
        rng = np.random.default_rng(7)
        x = rng.normal(size=10)
        analytic = net.encoder_jacobian_frobenius_sq(bundle, x)

        def z_of(xv):
            return net.encode(bundle, xv)[0]

        h = 1e-5
        fro = 0.0
        for i in range(10):
            up, down = x.copy(), x.copy()
            up[i] += h
            down[i] -= h
            col = (z_of(up) - z_of(down)) / (2 * h)
            fro += np.sum(col ** 2)
        assert analytic == pytest.approx(fro, rel=1e-4)

    def test_brute_force_per_entry_partials(self):
        # per-entry dz_j/dx_i on dims <= 8
        enc = net.xavier_init(
            [net.LayerSpec(6, 8, "relu"), net.LayerSpec(8, 4, "relu")], 12)
        dec = net.xavier_init(
            [net.LayerSpec(4, 8, "relu"), net.LayerSpec(8, 6, "linear")], 13)
        bundle = net.ModelBundle(enc, dec, [], 4, "baseline1")
        rng = np.random.default_rng(8)
        x = rng.normal(size=6)
        analytic = net.encoder_jacobian_frobenius_sq(bundle, x)
        h = 1e-6
        total = 0.0
        for i in range(6):
            up, down = x.copy(), x.copy()
            up[i] += h
            down[i] -= h
            total += np.sum(((net.encode(bundle, up)[0] - net.encode(bundle, down)[0]) / (2 * h)) ** 2)
        assert analytic == pytest.approx(total, rel=1e-4)

    def test_all_relus_inactive_gives_zero(self):
        enc = [net.Layer(np.ones((4, 3)), np.zeros(4), "relu"),
               net.Layer(np.ones((2, 4)), np.zeros(2), "relu")]
        dec = [net.Layer(np.ones((3, 2)), np.zeros(3), "linear")]
        bundle = net.ModelBundle(enc, dec, [], 2, "baseline1")
        assert net.encoder_jacobian_frobenius_sq(bundle, -np.ones(3)) == 0.0


class TestSerialization:
    def test_round_trip(self, tmp_path):
        bundle = toy_bundle("baseline2", seed=20)
        bundle.training_meta = {"seed": 20, "epochs": 3}
        path = tmp_path / "model.silm"
        net.save_model(bundle, path)
        loaded = net.load_model(path)
        assert loaded.regime == "baseline2"
        assert loaded.training_meta == bundle.training_meta
        for a, b in zip(bundle.parameters(), loaded.parameters()):
            assert np.array_equal(a, b)

    def test_truncated_file(self, tmp_path):
        bundle = toy_bundle(seed=21)
        path = tmp_path / "model.silm"
        net.save_model(bundle, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(CorruptModelError):
            net.load_model(path)

    def test_future_version(self, tmp_path):
        bundle = toy_bundle(seed=22)
        path = tmp_path / "model.silm"
        net.save_model(bundle, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99  # bump the little-endian version field
        path.write_bytes(bytes(raw))
        with pytest.raises(ModelVersionError):
            net.load_model(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.silm"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CorruptModelError):
            net.load_model(path)


def test_gradient_check_runtime_budget():
    start = time.monotonic()
    for loss_spec, y in [("proposed", [1.0, 0.0]), (("baseline1", 1e-2), [1.0, 0.0]),
                         ("baseline2", [0.0, 1.0]), ("invalid_only", [0.0, 1.0])]:
        regime = loss_spec[0] if isinstance(loss_spec, tuple) else loss_spec
        bundle = toy_bundle(regime, seed=30)
        rng = np.random.default_rng(31)
        x = rng.normal(scale=0.8, size=(2, 10))
        grads, _ = net.backward(bundle, x, np.array(y), loss_spec)
        assert_grads_close(net.flatten_grads(bundle, grads),
                           fd_gradients(bundle, x, np.array(y), loss_spec))
    assert time.monotonic() - start < 10.0
