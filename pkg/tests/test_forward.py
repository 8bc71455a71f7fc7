import math

import numpy as np
import pytest

from cdii import field as fd
from cdii import forward as fw


def grid_xy(n):
    x = np.linspace(0.0, 1.0, n)[None, :] * np.ones((n, 1))
    y = np.linspace(0.0, 1.0, n)[:, None] * np.ones((1, n))
    return x, y


class TestSolver:
    def test_affine_solution_exact(self):
        sigma = fd.make_phantom(fd.Constant(1.0), 33, 33)
        u = fw.solve_conductivity_pde(sigma)
        _, y = grid_xy(33)
        assert np.max(np.abs(u.values - y)) < 1e-9

    def test_sigma_scaling_invariance(self):
        sigma = fd.make_phantom(fd.FourMode(), 33, 33)
        u1 = fw.solve_conductivity_pde(sigma)
        u2 = fw.solve_conductivity_pde(fd.GridField(33, 33, 7.0 * sigma.values))
        assert np.max(np.abs(u1.values - u2.values)) < 1e-9

    def test_rejects_nonpositive_sigma(self):
        vals = np.ones((5, 5))
        vals[2, 2] = 0.0
        with pytest.raises(ValueError):
            fw.solve_conductivity_pde(fd.GridField(5, 5, vals))

    def test_rejects_tiny_grid(self):
        with pytest.raises(ValueError):
            fw.solve_conductivity_pde(fd.make_phantom(fd.Constant(1.0), 2, 2))

    def test_maximum_principle(self):
        rng = np.random.default_rng(0)
        sigma = fd.GridField(17, 17, 0.5 + rng.random((17, 17)))
        u = fw.solve_conductivity_pde(sigma)
        assert u.values.min() >= 0.0 - 1e-10
        assert u.values.max() <= 1.0 + 1e-10

    def test_manufactured_convergence_order(self):
        # -(sigma u')' = 0 for sigma = 1+x, u* = log(1+x)/log 2 (y-independent)
        errs = {}
        for n in (33, 65, 129):
            x, _ = grid_xy(n)
            sigma = fd.GridField(n, n, 1.0 + x)
            g = fw.DirichletData(lambda X, Y: np.log1p(X) / math.log(2.0))
            u = fw.solve_conductivity_pde(sigma, g)
            ustar = np.log1p(x) / math.log(2.0)
            errs[n] = float(np.sqrt(np.mean((u.values - ustar) ** 2)))
        order1 = math.log2(errs[33] / errs[65])
        order2 = math.log2(errs[65] / errs[129])
        assert 1.7 <= order1 <= 2.3
        assert 1.7 <= order2 <= 2.3


class TestCurrentMagnitude:
    def test_unit_gradient(self):
        sigma = fd.make_phantom(fd.Constant(1.0), 9, 9)
        _, y = grid_xy(9)
        u = fd.GridField(9, 9, y)
        a = fw.current_magnitude(sigma, u)
        assert np.max(np.abs(a.values - 1.0)) < 1e-13

    def test_linear_scaling(self):
        sigma = fd.make_phantom(fd.Constant(2.0), 9, 9)
        _, y = grid_xy(9)
        a = fw.current_magnitude(sigma, fd.GridField(9, 9, y))
        assert np.max(np.abs(a.values - 2.0)) < 1e-13

    def test_diagonal_affine(self):
        sigma = fd.make_phantom(fd.Constant(1.0), 9, 9)
        x, y = grid_xy(9)
        a = fw.current_magnitude(sigma, fd.GridField(9, 9, x + y))
        assert np.max(np.abs(a.values - math.sqrt(2.0))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fw.current_magnitude(fd.make_phantom(fd.Constant(1.0), 5, 5),
                                 fd.make_phantom(fd.Constant(1.0), 6, 6))

    def test_consistency_loop(self):
        # dividing a-dagger by the same discrete |grad u| returns sigma
        sigma = fd.make_phantom(fd.FourMode(), 65, 65)
        u = fw.solve_conductivity_pde(sigma)
        a = fw.current_magnitude(sigma, u)
        gx, gy = fw.gradient_components(u)
        mag = np.sqrt(gx * gx + gy * gy)
        assert mag.min() > 1e-3
        recovered = a.values / mag
        assert np.max(np.abs(recovered - sigma.values)) < 1e-12


class TestNoise:
    def test_zero_noise_identity(self):
        a = fd.make_phantom(fd.FourMode(), 17, 17)
        out = fw.add_noise(a, fw.NoiseSpec(0.0, seed=5))
        assert np.array_equal(out.values, a.values)

    def test_deterministic(self):
        a = fd.make_phantom(fd.FourMode(), 17, 17)
        s = fw.NoiseSpec(0.1, seed=7)
        assert np.array_equal(fw.add_noise(a, s).values, fw.add_noise(a, s).values)

    def test_different_seed_differs(self):
        a = fd.make_phantom(fd.FourMode(), 17, 17)
        out1 = fw.add_noise(a, fw.NoiseSpec(0.1, seed=7))
        out2 = fw.add_noise(a, fw.NoiseSpec(0.1, seed=8))
        assert not np.array_equal(out1.values, out2.values)

    def test_sample_std_on_ones(self):
        ones = fd.GridField(128, 128, np.ones((128, 128)))
        noisy = fw.add_noise(ones, fw.NoiseSpec(0.1, seed=0))
        assert 0.095 <= float(noisy.values.std()) <= 0.105

    def test_delta_range_checked(self):
        with pytest.raises(ValueError):
            fw.NoiseSpec(-0.1)
