import numpy as np
import pytest

from cdii import autodiff as ad
from cdii import field as fd
from cdii import loss as ls
from cdii import network
from cdii.forward import DirichletData


def ones_grid(n=17):
    return fd.GridField(n, n, np.ones((n, n)))


def identity_u_equals_y():
    """(spec, theta) realizing u(x, y) = y exactly."""
    spec = network.MlpSpec((2, 1, 1), activation="identity")
    theta = np.array([0.0, 1.0, 0.0, 1.0, 0.0])  # W1=[0,1], b1=0, W2=[1], b2=0
    return spec, theta


GY = DirichletData()


class TestSamplers:
    def test_interior_strictly_inside(self):
        pts = ls.sample_interior(5000, seed=0)
        assert pts.min() > 0.0 and pts.max() < 1.0

    def test_interior_deterministic(self):
        assert np.array_equal(ls.sample_interior(100, 3), ls.sample_interior(100, 3))

    def test_interior_mean(self):
        pts = ls.sample_interior(100000, seed=1)
        assert 0.494 <= pts[:, 0].mean() <= 0.506
        assert 0.494 <= pts[:, 1].mean() <= 0.506

    def test_interior_rejects_zero(self):
        with pytest.raises(ValueError):
            ls.sample_interior(0, seed=0)

    def test_interior_subdomain(self):
        rect = (0.25, 0.75, 0.1, 0.4)
        pts = ls.sample_interior(2000, seed=2, subdomain=rect)
        assert pts[:, 0].min() > 0.25 and pts[:, 0].max() < 0.75
        assert pts[:, 1].min() > 0.1 and pts[:, 1].max() < 0.4

    def test_boundary_on_edges(self):
        pts = ls.sample_boundary(5000, seed=0)
        dist = np.minimum.reduce([pts[:, 0], 1 - pts[:, 0], pts[:, 1], 1 - pts[:, 1]])
        assert np.all(dist == 0.0)

    def test_boundary_edge_frequencies(self):
        pts = ls.sample_boundary(100000, seed=4)
        bottom = np.mean(pts[:, 1] == 0.0)
        top = np.mean(pts[:, 1] == 1.0)
        left = np.mean((pts[:, 0] == 0.0) & (pts[:, 1] != 0.0) & (pts[:, 1] != 1.0))
        right = np.mean((pts[:, 0] == 1.0) & (pts[:, 1] != 0.0) & (pts[:, 1] != 1.0))
        for frac in (bottom, top, left, right):
            assert 0.24 <= frac <= 0.26

    def test_boundary_deterministic(self):
        assert np.array_equal(ls.sample_boundary(64, 9), ls.sample_boundary(64, 9))


class TestHuber:
    def test_knee_continuity(self):
        zeta = 0.37
        assert ls.huber(zeta, zeta) == zeta
        assert zeta * zeta / (2 * zeta) + zeta / 2 == pytest.approx(zeta, rel=1e-15)

    def test_value_at_zero(self):
        assert ls.huber(0.0, 0.01) == 0.005

    def test_c1_at_knee_by_finite_differences(self):
        zeta = 0.2
        # branch values agree at the knee
        assert abs((zeta**2 / (2 * zeta) + zeta / 2) - zeta) <= 1e-16
        # one-sided slopes approach 1 from both branches
        h = 1e-7
        left = (ls.huber(zeta, zeta) - ls.huber(zeta - h, zeta)) / h
        right = (ls.huber(zeta + h, zeta) - ls.huber(zeta, zeta)) / h
        assert abs(left - 1.0) < 1e-6
        assert abs(right - 1.0) < 1e-9
        # derivative limits from the implementation's own partials
        def slope(t):
            tape = ad.Tape()
            v = tape.leaf(t)
            return float(ad.backward(tape, ad.abs_smooth(v, zeta))[0])

        assert abs(slope(zeta * (1.0 - 1e-9)) - slope(zeta * (1.0 + 1e-9))) <= 1e-8

    def test_dominates_absolute_value(self):
        zeta = 0.1
        for t in np.linspace(0.0, 0.5, 101):
            assert ls.huber(t, zeta) >= t
            if t >= zeta:
                assert ls.huber(t, zeta) == t

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ls.huber(-0.1, 0.1)


class TestEmpiricalLoss:
    def test_zero_theta_closed_form(self):
        # u = 0: interior ~ psi(0) = zeta/2 per sample, boundary = gamma*4*mean(psi(y_j))
        spec = network.default_spec(3, 5)
        theta = np.zeros(network.n_params(spec))
        zeta, gamma = 0.01, 7.0
        batch = ls.assemble_batch(ones_grid(), GY, 500, 300, seed=5)
        cfg = ls.LossConfig(gamma, zeta)
        tape = ad.Tape()
        value = float(ls.empirical_loss(tape, spec, tape.leaf(theta), batch, cfg).value)
        yj = batch.g_boundary
        psi = np.where(yj >= zeta, yj, yj**2 / (2 * zeta) + zeta / 2)
        expected = zeta / 2 + gamma * 4.0 * psi.mean()
        assert value == pytest.approx(expected, rel=1e-12)

    def test_exact_affine_network(self):
        spec, theta = identity_u_equals_y()
        zeta, gamma = 0.01, 100.0
        batch = ls.assemble_batch(ones_grid(), GY, 200, 100, seed=6)
        tape = ad.Tape()
        value = float(ls.empirical_loss(tape, spec, tape.leaf(theta), batch,
                                        ls.LossConfig(gamma, zeta)).value)
        assert value == pytest.approx(1.0 + 2 * gamma * zeta, rel=1e-12)

    def test_doubling_gamma_doubles_boundary_only(self):
        spec = network.default_spec(3, 4)
        theta = network.init_params(spec, seed=7)
        batch = ls.assemble_batch(ones_grid(), GY, 300, 150, seed=8)

        def value(gamma):
            tape = ad.Tape()
            return float(ls.empirical_loss(tape, spec, tape.leaf(theta), batch,
                                           ls.LossConfig(gamma, 0.01)).value)

        l1, l2 = value(5.0), value(10.0)
        boundary_part = l2 - l1
        tape = ad.Tape()
        interior_only = float(ls.empirical_loss(tape, spec, tape.leaf(theta), batch,
                                                ls.LossConfig(1e-300, 0.01)).value)
        assert l1 - boundary_part == pytest.approx(interior_only, rel=1e-9)

    def test_nonnegative(self):
        rng = np.random.default_rng(9)
        a = fd.GridField(9, 9, rng.random((9, 9)))
        for trial in range(5):
            spec = network.default_spec(3, 5)
            theta = network.init_params(spec, seed=trial)
            batch = ls.assemble_batch(a, GY, 50, 30, seed=trial)
            tape = ad.Tape()
            value = float(ls.empirical_loss(tape, spec, tape.leaf(theta), batch,
                                            ls.LossConfig(3.0, 0.05)).value)
            assert value >= 0.0

    def test_smoothed_dominates_unsmoothed(self):
        spec = network.default_spec(4, 6)
        theta = network.init_params(spec, seed=10)
        a = ones_grid()
        zeta, gamma = 0.2, 3.0
        batch = ls.assemble_batch(a, GY, 400, 200, seed=11)
        tape = ad.Tape()
        thv = tape.leaf(theta)
        smoothed = float(ls.empirical_loss(tape, spec, thv, batch,
                                           ls.LossConfig(gamma, zeta)).value)
        # unsmoothed value from the same network evaluations
        t2 = ad.Tape()
        thv2 = t2.leaf(theta)
        _, gx, gy = network.forward_batch(t2, spec, thv2, batch.interior, with_gradient=True)
        mag = np.sqrt(gx.value**2 + gy.value**2)
        u_b = network.forward_batch(t2, spec, thv2, batch.boundary).value
        raw = (batch.a_interior * mag).mean() + gamma * 4.0 * (
            batch.a_boundary * np.abs(u_b - batch.g_boundary)).mean()
        assert smoothed >= raw - 1e-14
        assert smoothed - raw <= (1.0 + gamma * 4.0) * batch.a_interior.max() * zeta / 2 + 1e-14

    def test_theta_gradient_matches_finite_differences(self):
        spec = network.MlpSpec((2, 6, 5, 1))
        theta = network.init_params(spec, seed=12)
        batch = ls.assemble_batch(ones_grid(), GY, 40, 20, seed=13)
        cfg = ls.LossConfig(5.0, 0.01)

        def f(thv):
            return ls.empirical_loss(thv.tape, spec, thv, batch, cfg)

        assert ad.grad_check(f, theta, 1e-5) <= 1e-5

    def test_negative_a_rejected(self):
        spec = network.default_spec(3, 4)
        theta = network.init_params(spec, seed=0)
        batch = ls.assemble_batch(ones_grid(), GY, 10, 10, seed=0)
        bad = ls.SampleBatch(batch.interior, batch.a_interior - 2.0, batch.boundary,
                             batch.a_boundary, batch.g_boundary)
        tape = ad.Tape()
        with pytest.raises(ValueError):
            ls.empirical_loss(tape, spec, tape.leaf(theta), bad, ls.LossConfig(1.0, 0.01))


class TestPartialLoss:
    def test_full_domain_reproduces_empirical(self):
        spec = network.default_spec(3, 5)
        theta = network.init_params(spec, seed=14)
        rect = (0.0, 1.0, 0.0, 1.0)
        batch_full = ls.assemble_batch(ones_grid(), GY, 100, 60, seed=15)
        batch_rect = ls.assemble_batch(ones_grid(), GY, 100, 60, seed=15, subdomain=rect)
        assert np.array_equal(batch_full.interior, batch_rect.interior)
        cfg = ls.LossConfig(3.0, 0.01, area=1.0)
        t1, t2 = ad.Tape(), ad.Tape()
        v_full = float(ls.empirical_loss(t1, spec, t1.leaf(theta), batch_full, cfg).value)
        v_part = float(ls.empirical_loss_partial(t2, spec, t2.leaf(theta), batch_rect,
                                                 cfg, rect).value)
        assert v_full == v_part

    def test_area_prefactor(self):
        spec, theta = identity_u_equals_y()
        rect = (0.25, 0.75, 0.25, 0.75)
        batch = ls.assemble_batch(ones_grid(), GY, 128, 64, seed=16, subdomain=rect)
        zeta, gamma = 0.01, 10.0
        cfg = ls.LossConfig(gamma, zeta, area=0.25)
        tape = ad.Tape()
        value = float(ls.empirical_loss_partial(tape, spec, tape.leaf(theta), batch,
                                                cfg, rect).value)
        assert value == pytest.approx(0.25 * 1.0 + 2 * gamma * zeta, rel=1e-12)

    def test_area_mismatch_rejected(self):
        spec, theta = identity_u_equals_y()
        rect = (0.25, 0.75, 0.25, 0.75)
        batch = ls.assemble_batch(ones_grid(), GY, 16, 8, seed=17, subdomain=rect)
        tape = ad.Tape()
        with pytest.raises(ValueError):
            ls.empirical_loss_partial(tape, spec, tape.leaf(theta), batch,
                                      ls.LossConfig(1.0, 0.01, area=1.0), rect)


class TestQuadratureLoss:
    def test_exact_value_binary_parameters(self):
        spec, theta = identity_u_equals_y()
        gamma, zeta = 128.0, 0.015625  # exactly representable products
        value = ls.quadrature_loss(spec, theta, 256, ls.LossConfig(gamma, zeta),
                                   ones_grid(), GY)
        assert value == 1.0 + 2 * gamma * zeta == 5.0

    def test_exact_value_paper_parameters(self):
        spec, theta = identity_u_equals_y()
        gamma, zeta = 100.0, 0.01
        value = ls.quadrature_loss(spec, theta, 256, ls.LossConfig(gamma, zeta),
                                   ones_grid(), GY)
        assert value == pytest.approx(1.0 + 2 * gamma * zeta, rel=1e-13)

    def test_grid_refinement_self_consistency(self):
        spec = network.default_spec(3, 6)
        theta = network.init_params(spec, seed=18)
        cfg = ls.LossConfig(10.0, 0.01)
        a = ones_grid(33)
        v128 = ls.quadrature_loss(spec, theta, 128, cfg, a, GY)
        v256 = ls.quadrature_loss(spec, theta, 256, cfg, a, GY)
        assert abs(v256 - v128) / abs(v256) < 1e-3

    def test_minimum_resolution_enforced(self):
        spec, theta = identity_u_equals_y()
        with pytest.raises(ValueError):
            ls.quadrature_loss(spec, theta, 32, ls.LossConfig(1.0, 0.01), ones_grid(), GY)

    def test_mc_agrees_within_three_standard_errors(self):
        spec = network.default_spec(3, 6)
        theta = network.init_params(spec, seed=19)
        cfg = ls.LossConfig(10.0, 0.01)
        a = ones_grid(33)
        quad = ls.quadrature_loss(spec, theta, 256, cfg, a, GY)
        hits = 0
        for seed in range(5):
            batch = ls.assemble_batch(a, GY, 100000, 100000, seed=100 + seed)
            tape = ad.Tape()
            mc = float(ls.empirical_loss(tape, spec, tape.leaf(theta), batch, cfg).value)
            se = ls.mc_standard_error(spec, theta, batch, cfg)
            hits += abs(mc - quad) <= 3.0 * se
        assert hits >= 4
