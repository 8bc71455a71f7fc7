import numpy as np
import pytest

from cdii import autodiff as ad
from cdii import network
from cdii.errors import FormatError


def plain_eval(spec, theta, x, y):
    """Straight-line network evaluation, independent of the tape machinery."""
    acts = {"tanh": np.tanh, "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
            "identity": lambda z: z}
    act = acts[spec.activation]
    f = np.array([x, y])
    pos = 0
    ls = spec.layer_sizes
    for l in range(1, len(ls)):
        d_out, d_in = ls[l], ls[l - 1]
        w = theta[pos:pos + d_out * d_in].reshape(d_out, d_in)
        pos += d_out * d_in
        b = theta[pos:pos + d_out]
        pos += d_out
        z = w @ f + b
        f = act(z) if l < len(ls) - 1 else z
    return float(f[0])


def tanh_x1_theta():
    """theta realizing u = tanh(x) for layer sizes (2, 1, 1)."""
    return np.array([1.0, 0.0, 0.0, 1.0, 0.0])  # W1=[1,0], b1=0, W2=[1], b2=0


class TestSpec:
    def test_param_count_example(self):
        assert network.n_params(network.default_spec(9, 10)) == 811

    def test_width_includes_input(self):
        assert network.MlpSpec((2, 1, 1)).width == 2

    def test_rejects_wrong_io_sizes(self):
        with pytest.raises(ValueError):
            network.MlpSpec((3, 5, 1))
        with pytest.raises(ValueError):
            network.MlpSpec((2, 5, 2))
        with pytest.raises(ValueError):
            network.MlpSpec((2, 1))

    def test_theta_length_checked(self):
        spec = network.MlpSpec((2, 3, 1))
        with pytest.raises(ValueError):
            network.forward_eval(spec, np.zeros(5), 0.1, 0.2)


class TestForward:
    def test_zero_theta_gives_zero(self):
        spec = network.default_spec(4, 6)
        theta = np.zeros(network.n_params(spec))
        for x, y in [(0.0, 0.0), (0.3, 0.9), (1.0, 1.0)]:
            assert network.forward_eval(spec, theta, x, y) == 0.0

    def test_tanh_x1_network(self):
        spec = network.MlpSpec((2, 1, 1))
        theta = tanh_x1_theta()
        assert network.forward_eval(spec, theta, 0.0, 0.7) == 0.0
        assert network.forward_eval(spec, theta, 0.4, 0.1) == pytest.approx(
            np.tanh(0.4), rel=1e-15)

    def test_matches_plain_evaluator(self):
        rng = np.random.default_rng(0)
        for trial in range(30):
            depth = int(rng.integers(2, 6))
            width = int(rng.integers(2, 9))
            act = ("tanh", "sigmoid", "identity")[trial % 3]
            spec = network.default_spec(depth, width, act)
            theta = network.init_params(spec, seed=trial, scheme="uniform", r=0.8)
            x, y = rng.random(2)
            got = network.forward_eval(spec, theta, x, y)
            want = plain_eval(spec, theta, x, y)
            assert got == pytest.approx(want, rel=1e-14, abs=1e-14)


class TestSpatialGradient:
    def test_tanh_x1_gradient_at_origin(self):
        spec = network.MlpSpec((2, 1, 1))
        g = network.spatial_gradient(spec, tanh_x1_theta(), 0.0, 0.0)
        assert g[0] == pytest.approx(1.0, rel=1e-15)
        assert g[1] == 0.0

    def test_zero_theta_zero_gradient(self):
        spec = network.default_spec(3, 5)
        g = network.spatial_gradient(spec, np.zeros(network.n_params(spec)), 0.5, 0.5)
        assert np.array_equal(g, np.zeros(2))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        h = 1e-5
        for trial in range(10):
            spec = network.default_spec(int(rng.integers(2, 6)), int(rng.integers(3, 9)))
            theta = network.init_params(spec, seed=100 + trial)
            x, y = rng.random(2) * 0.8 + 0.1
            g = network.spatial_gradient(spec, theta, x, y)
            fx = (network.forward_eval(spec, theta, x + h, y)
                  - network.forward_eval(spec, theta, x - h, y)) / (2 * h)
            fy = (network.forward_eval(spec, theta, x, y + h)
                  - network.forward_eval(spec, theta, x, y - h)) / (2 * h)
            for got, want in ((g[0], fx), (g[1], fy)):
                assert abs(got - want) / max(abs(want), 1.0) <= 1e-6


class TestInitAndClip:
    def test_same_seed_bitwise(self):
        spec = network.default_spec(5, 8)
        t1 = network.init_params(spec, seed=3)
        t2 = network.init_params(spec, seed=3)
        assert np.array_equal(t1, t2)

    def test_uniform_bounded(self):
        spec = network.default_spec(4, 7)
        theta = network.init_params(spec, seed=9, scheme="uniform", r=0.3)
        assert np.max(np.abs(theta)) <= 0.3

    def test_glorot_layer_bounds(self):
        spec = network.MlpSpec((2, 10, 10, 1))
        theta = network.init_params(spec, seed=1)
        bound1 = np.sqrt(6.0 / 12.0)
        assert np.max(np.abs(theta[:20])) <= bound1
        assert np.all(theta[20:30] == 0.0)  # glorot biases are zero

    def test_clip_clamps_and_is_idempotent(self):
        theta = np.array([-3.0, 0.2, 2.0, 1.0])
        c = network.clip_params(theta, 1.0)
        assert np.array_equal(c, [-1.0, 0.2, 1.0, 1.0])
        assert np.array_equal(network.clip_params(c, 1.0), c)

    def test_clip_within_bounds_unchanged(self):
        theta = np.array([0.5, -0.5])
        assert np.array_equal(network.clip_params(theta, 1.0), theta)


class TestTheoryChecks:
    def test_zero_theta_passes(self):
        spec = network.default_spec(3, 5)
        probes = network.probe_grid(5)
        measured, bound, ok = network.check_gradient_sup_bound(
            spec, np.zeros(network.n_params(spec)), probes)
        assert measured == 0.0 and ok

    def test_tanh_x1_hand_bound(self):
        spec = network.MlpSpec((2, 1, 1))
        probes = network.probe_grid(11)
        measured, bound, ok = network.check_gradient_sup_bound(spec, tanh_x1_theta(), probes)
        assert measured == pytest.approx(1.0, rel=1e-15)  # probes include x = 0
        assert bound == pytest.approx(2.0 * np.sqrt(2.0), rel=1e-15)
        assert ok

    def test_sup_bound_random_suite(self):
        rng = np.random.default_rng(2)
        probes = network.probe_grid(9)
        for trial in range(25):
            spec = network.default_spec(int(rng.integers(2, 7)), int(rng.integers(3, 12)))
            theta = network.init_params(spec, seed=trial, scheme="uniform", r=1.5)
            _, _, ok = network.check_gradient_sup_bound(spec, theta, probes)
            assert ok

    def test_lipschitz_equal_params(self):
        spec = network.default_spec(3, 6)
        theta = network.init_params(spec, seed=4)
        probes = network.probe_grid(7)
        measured, _, ok = network.check_param_lipschitz(spec, theta, theta, probes)
        assert measured == 0.0 and ok

    def test_lipschitz_random_pairs(self):
        rng = np.random.default_rng(3)
        probes = network.probe_grid(7)
        for trial in range(25):
            spec = network.default_spec(int(rng.integers(2, 6)), int(rng.integers(3, 10)))
            theta = network.init_params(spec, seed=trial)
            theta2 = theta + (rng.random(theta.size) - 0.5) * 0.2
            measured, bound, ok = network.check_param_lipschitz(spec, theta, theta2, probes)
            assert ok

    def test_lipschitz_single_bias_perturbation(self):
        spec = network.default_spec(4, 6)
        theta = network.init_params(spec, seed=8)
        theta2 = theta.copy()
        # last hidden layer bias block sits just before the output layer params
        out_w = 6 * 1 + 1
        theta2[-out_w - 1] += 1e-3
        probes = network.probe_grid(9)
        measured, bound, ok = network.check_param_lipschitz(spec, theta, theta2, probes)
        assert measured > 0.0
        assert ok

    def test_per_layer_bounds(self):
        spec = network.default_spec(5, 8)
        theta = network.init_params(spec, seed=10, scheme="uniform", r=1.2)
        for measured, bound in network.layer_gradient_sups(spec, theta, network.probe_grid(7)):
            assert measured <= bound

    def test_lipschitz_spec_mismatch(self):
        spec = network.default_spec(3, 4)
        theta = network.init_params(spec, seed=0)
        with pytest.raises(ValueError):
            network.check_param_lipschitz(spec, theta, np.zeros(7), network.probe_grid(3))


class TestCheckpointIO:
    def test_round_trip(self, tmp_path):
        spec = network.default_spec(4, 6, "sigmoid")
        theta = network.init_params(spec, seed=12)
        path = tmp_path / "net.mlp"
        network.save_params(spec, theta, path)
        spec2, theta2 = network.load_params(path)
        assert spec2 == spec
        assert np.array_equal(theta, theta2)

    def test_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.mlp"
        path.write_text("mlp layers=2,3,1 activation=tanh\n1.0\n2.0\n")
        with pytest.raises(FormatError, match="expected 13 values"):
            network.load_params(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.mlp"
        path.write_text("mlp layers=2,3,1\n")
        with pytest.raises(FormatError, match="line 1"):
            network.load_params(path)
