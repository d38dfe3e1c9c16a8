import numpy as np
import pytest
from helpers import (
    central_difference,
    max_relative_error,
    mlp_forward_reference,
    scalar_adam_reference,
)

from herlab.nets import Adam, Mlp, RunningNormalizer, load_snapshot, save_snapshot


def zeroed(mlp):
    for p in mlp.parameters():
        p[:] = 0.0
    return mlp


def random_net_without_kinks(rng, sizes, output_activation="identity", margin=1e-3):
    """Random net + input whose hidden pre-activations stay away from the ReLU kink."""
    for _ in range(200):
        net = Mlp(sizes, output_activation=output_activation, rng=rng)
        x = rng.standard_normal(sizes[0])
        _, cache = net.forward_cached(x)
        if all(np.abs(z).min() > margin for z in cache["pre"][:-1]):
            return net, x
    raise AssertionError("could not find a kink-free configuration")


class TestMlpForward:
    def test_zero_parameters_identity_output(self):
        net = zeroed(Mlp([3, 4, 2], rng=np.random.default_rng(0)))
        assert np.array_equal(net.forward([1.0, -2.0, 3.0]), np.zeros(2))

    def test_single_layer_identity_weight(self):
        net = Mlp.from_parameters([3, 3], "identity", [np.eye(3)], [np.zeros(3)])
        x = np.array([0.5, -1.5, 2.0])
        assert np.array_equal(net.forward(x), x)

    def test_matches_matrix_arithmetic_reimplementation(self):
        rng = np.random.default_rng(42)
        net = Mlp([4, 8, 6, 3], rng=rng)
        x = rng.standard_normal(4)
        expected = mlp_forward_reference(net.weights, net.biases, x)
        np.testing.assert_allclose(net.forward(x), expected, atol=1e-10, rtol=0)

    def test_tanh_output_matches_reference(self):
        rng = np.random.default_rng(7)
        net = Mlp([3, 5, 2], output_activation="tanh", rng=rng)
        x = rng.standard_normal(3)
        expected = mlp_forward_reference(net.weights, net.biases, x, "tanh")
        np.testing.assert_allclose(net.forward(x), expected, atol=1e-12, rtol=0)

    def test_batch_forward_matches_per_row(self):
        # BLAS batches and single rows sum in different orders; agreement is
        # to rounding, not bitwise.
        rng = np.random.default_rng(3)
        net = Mlp([4, 8, 2], rng=rng)
        xs = rng.standard_normal((5, 4))
        batch = net.forward(xs)
        rows = np.stack([net.forward(x) for x in xs])
        np.testing.assert_allclose(batch, rows, rtol=1e-12, atol=1e-14)

    def test_dimension_mismatch_raises(self):
        net = Mlp([3, 2], rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="dimension mismatch"):
            net.forward(np.zeros(4))

    def test_deterministic_initialization(self):
        a = Mlp([4, 8, 2], rng=np.random.default_rng(123))
        b = Mlp([4, 8, 2], rng=np.random.default_rng(123))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa, pb)


class TestMlpGradients:
    def test_zero_upstream_gives_zero_gradients(self):
        rng = np.random.default_rng(1)
        net = Mlp([3, 6, 2], rng=rng)
        grads, input_grad = net.gradients(rng.standard_normal(3), np.zeros(2))
        assert all(np.all(g == 0) for g in grads)
        assert np.all(input_grad == 0)

    def test_one_layer_weight_gradient_is_outer_product(self):
        net = Mlp.from_parameters([3, 2], "identity", [np.zeros((2, 3))], [np.zeros(2)])
        x = np.array([1.0, 2.0, -1.0])
        u = np.array([0.5, -2.0])
        grads, input_grad = net.gradients(x, u)
        np.testing.assert_array_equal(grads[0], np.outer(u, x))
        np.testing.assert_array_equal(grads[1], u)
        np.testing.assert_array_equal(input_grad, np.zeros(3))  # zero weights

    def test_relu_net_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        net, x = random_net_without_kinks(rng, [4, 8, 8, 3])
        u = rng.standard_normal(3)

        def loss():
            return float(np.dot(u, net.forward(x)))

        analytic, _ = net.gradients(x, u)
        numeric = central_difference(loss, net.parameters())
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        net, x = random_net_without_kinks(rng, [5, 10, 2], output_activation="tanh")
        u = rng.standard_normal(2)
        _, input_grad = net.gradients(x, u)
        xs = [x]

        def loss():
            return float(np.dot(u, net.forward(xs[0])))

        numeric = central_difference(loss, [x])
        assert max_relative_error([input_grad], numeric) < 1e-4

    def test_many_random_configurations(self):
        rng = np.random.default_rng(999)
        for _ in range(20):
            sizes = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(3, 5)))]
            act = "tanh" if rng.random() < 0.5 else "identity"
            net, x = random_net_without_kinks(rng, sizes, output_activation=act)
            u = rng.standard_normal(sizes[-1])

            def loss():
                return float(np.dot(u, net.forward(x)))

            analytic, _ = net.gradients(x, u)
            numeric = central_difference(loss, net.parameters())
            assert max_relative_error(analytic, numeric) < 1e-4

    def test_batch_gradient_is_sum_of_rows(self):
        rng = np.random.default_rng(5)
        net = Mlp([3, 6, 2], rng=rng)
        xs = rng.standard_normal((4, 3))
        us = rng.standard_normal((4, 2))
        batch_grads, batch_input_grad = net.gradients(xs, us)
        summed = None
        for x, u in zip(xs, us):
            g, _ = net.gradients(x, u)
            summed = g if summed is None else [a + b for a, b in zip(summed, g)]
        for bg, sg in zip(batch_grads, summed):
            np.testing.assert_allclose(bg, sg, atol=1e-12)
        assert batch_input_grad.shape == xs.shape


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = np.array([1.0, -2.0])
        opt = Adam([p], lr=0.1)
        opt.step([np.zeros(2)])
        assert np.array_equal(p, [1.0, -2.0])
        assert opt.t == 1

    def test_first_step_is_minus_lr_times_sign(self):
        p = np.array([0.0])
        opt = Adam([p], lr=0.001)
        opt.step([np.array([1.0])])
        assert p[0] == pytest.approx(-0.001, rel=1e-6)

    def test_two_steps_match_scalar_reference(self):
        p = np.array([0.3])
        opt = Adam([p], lr=0.01)
        opt.step([np.array([0.7])])
        opt.step([np.array([0.7])])
        expected = scalar_adam_reference([0.7, 0.7], lr=0.01, x0=0.3)
        assert abs(p[0] - expected) < 1e-12

    def test_layout_invariance(self):
        rng = np.random.default_rng(2)
        w = rng.standard_normal((3, 2))
        b = rng.standard_normal(3)
        gw = rng.standard_normal((3, 2))
        gb = rng.standard_normal(3)

        split_w, split_b = w.copy(), b.copy()
        opt = Adam([split_w, split_b], lr=0.05)
        opt.step([gw, gb])
        opt.step([gw * 0.5, gb * 0.5])

        flat = np.concatenate([w.reshape(-1), b])
        gflat = np.concatenate([gw.reshape(-1), gb])
        opt2 = Adam([flat], lr=0.05)
        opt2.step([gflat])
        opt2.step([gflat * 0.5])

        np.testing.assert_array_equal(flat, np.concatenate([split_w.reshape(-1), split_b]))

    def test_non_finite_gradient_names_tensor(self):
        p = np.zeros(2)
        opt = Adam([p], names=["critic.W1"])
        with pytest.raises(ValueError, match="critic.W1"):
            opt.step([np.array([np.nan, 0.0])])
        assert opt.t == 0  # rejected step does not advance the counter


class TestRunningNormalizer:
    def test_fresh_normalizer_is_near_identity(self):
        norm = RunningNormalizer(3)
        x = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(norm.normalize(x), x / np.sqrt(1.0 + 1e-8), rtol=0, atol=1e-15)

    def test_constant_stream_centers_to_zero(self):
        norm = RunningNormalizer(2)
        c = np.array([3.0, -1.0])
        for _ in range(50):
            norm.update(np.tile(c, (10, 1)))
        np.testing.assert_allclose(norm.normalize(c), np.zeros(2), atol=1e-6)

    def test_batched_equals_streamed(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((100, 4))
        b = rng.standard_normal((57, 4))
        streamed = RunningNormalizer(4)
        streamed.update(a)
        streamed.update(b)
        batched = RunningNormalizer(4)
        batched.update(np.vstack([a, b]))
        np.testing.assert_allclose(streamed.mean, batched.mean, atol=1e-8)
        np.testing.assert_allclose(streamed.var, batched.var, atol=1e-8)

    def test_clipping(self):
        norm = RunningNormalizer(1, clip_range=5.0)
        norm.update(np.linspace(-0.01, 0.01, 100)[:, None])
        assert norm.normalize(np.array([100.0]))[0] == 5.0
        assert norm.normalize(np.array([-100.0]))[0] == -5.0

    def test_variance_floor(self):
        norm = RunningNormalizer(1)
        norm.update(np.ones((100, 1)))
        assert norm.var[0] >= 1e-8

    def test_dimension_mismatch_raises(self):
        norm = RunningNormalizer(2)
        with pytest.raises(ValueError, match="dimension mismatch"):
            norm.update(np.zeros((3, 5)))
        with pytest.raises(ValueError, match="dimension mismatch"):
            norm.normalize(np.zeros(5))

    def test_counters(self):
        norm = RunningNormalizer(2)
        norm.update(np.zeros((7, 2)))
        norm.update(np.zeros(2))
        assert norm.rows_seen == 8
        assert norm.update_calls == 2


class TestSnapshots:
    def test_mlp_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(21)
        net = Mlp([4, 7, 3], output_activation="tanh", rng=rng)
        path = tmp_path / "net.txt"
        save_snapshot(path, mlps={"actor": net})
        loaded, _, _ = load_snapshot(path)
        restored = loaded["actor"]
        assert restored.layer_sizes == net.layer_sizes
        assert restored.output_activation == "tanh"
        for a, b in zip(net.parameters(), restored.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_normalizer_and_scalar_round_trip(self, tmp_path):
        norm = RunningNormalizer(3, clip_range=4.0, var_floor=1e-6)
        norm.update(np.random.default_rng(1).standard_normal((11, 3)))
        path = tmp_path / "snap.txt"
        save_snapshot(path, normalizers={"state": norm}, scalars={"gamma": 0.98})
        _, norms, scalars = load_snapshot(path)
        restored = norms["state"]
        np.testing.assert_array_equal(restored.mean, norm.mean)
        np.testing.assert_array_equal(restored.var, norm.var)
        assert restored.count == norm.count
        assert restored.clip_range == 4.0
        assert scalars["gamma"] == 0.98

    def test_rejects_non_snapshot_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("hello\n")
        with pytest.raises(ValueError, match="not a herlab snapshot"):
            load_snapshot(path)
