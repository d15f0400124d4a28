import numpy as np
import pytest

from sdheat.heat_const import ConstCoeffs, kernel_nd, recommended_radius
from sdheat.lattice import Field, GridSpec
from sdheat.oracle import Generator, evolve_with_potential, expm_apply, gamma_oracle, residual
from sdheat.parametrix import Coefficients

# fundamental-solution column of the reference variable-coefficient
# configuration (dx=1/16, radius 64, c = 1 + 0.5 sin(2 pi x), T = 0.25,
# base point 0), integrated at tolerance 1e-10
REFERENCE_COLUMN = {
    0: 5.142980407950175e-01,
    1: 5.048925750433217e-01,
    -1: 5.198620242514639e-01,
    8: 3.714163525551418e-01,
    -8: 4.084292344465389e-01,
    32: 6.144012637955312e-03,
    -32: 6.144012637955316e-03,
    64: 2.286383139297333e-08,
}


def small_setup():
    g = GridSpec(dx=0.25, dim=1, radius=20)
    c = Coefficients.from_function(g, lambda x: 1.0 + 0.4 * np.sin(2 * np.pi * x / (g.npts * g.dx)))
    return g, c


class TestGenerator:
    def test_constants_in_kernel(self):
        g, c = small_setup()
        gen = Generator(c)
        out = gen.apply(np.ones(g.shape))
        assert np.abs(out).max() <= 1e-13

    def test_stencil_row_sums_vanish(self):
        # conservation in the sense L(const) = 0; with variable
        # coefficients the adjoint sums need not vanish
        g, c = small_setup()
        gen = Generator(c)
        rng = np.random.default_rng(0)
        v = rng.standard_normal(g.shape)
        lv = gen.apply(v)
        assert np.isfinite(lv).all()
        assert np.abs(gen.apply(np.full(g.shape, 3.7))).max() <= 1e-12

    def test_norm_bound(self):
        g, c = small_setup()
        gen = Generator(c)
        # row-sum bound dominates the actual operator norm
        rng = np.random.default_rng(1)
        v = rng.standard_normal(g.shape)
        assert np.abs(gen.apply(v)).max() <= gen.norm_bound() * np.abs(v).max()


class TestExpmApply:
    def test_zero_time(self):
        g, c = small_setup()
        v = Field(g, np.arange(g.site_count, dtype=float).reshape(g.shape))
        out = expm_apply(Generator(c), 0.0, v)
        assert np.array_equal(out.values, v.values)

    def test_constant_coefficients_match_kernel(self):
        dx, t = 0.5, 0.4
        g = GridSpec(dx=dx, dim=1, radius=recommended_radius(t, 1.0, dx))
        c = Coefficients.constant(g, 1.0)
        out = expm_apply(Generator(c), t, Field.dirac(g), tol=1e-11)
        direct = np.array([kernel_nd((a,), t, ConstCoeffs.of(1.0), dx)
                           for a in range(-g.radius, g.radius + 1)])
        assert np.abs(out.values - direct).max() <= 1e-11 * direct.max()

    def test_constants_preserved(self):
        g, c = small_setup()
        out = expm_apply(Generator(c), 0.7, Field.constant(g, 1.0), tol=1e-12)
        assert np.abs(out.values - 1.0).max() <= 1e-12

    def test_positivity_preserved(self):
        g, c = small_setup()
        rng = np.random.default_rng(2)
        v = Field(g, np.abs(rng.standard_normal(g.shape)))
        out = expm_apply(Generator(c), 0.3, v, tol=1e-11)
        assert out.values.min() >= -1e-11

    def test_semigroup(self):
        g, c = small_setup()
        gen = Generator(c)
        rng = np.random.default_rng(3)
        v = Field(g, rng.standard_normal(g.shape))
        one_shot = expm_apply(gen, 0.5, v, tol=1e-12)
        two_step = expm_apply(gen, 0.2, expm_apply(gen, 0.3, v, tol=1e-12), tol=1e-12)
        assert np.abs(one_shot.values - two_step.values).max() <= 2e-12 * np.abs(v.values).max()

    def test_tolerance_self_consistency(self):
        g, c = small_setup()
        coarse = gamma_oracle(c, (0,), 0.3, tol=1e-6)
        fine = gamma_oracle(c, (0,), 0.3, tol=5e-7)
        assert np.abs(coarse.values - fine.values).max() <= 1e-6 * coarse.values.max()

    def test_time_validation(self):
        g, c = small_setup()
        with pytest.raises(ValueError):
            expm_apply(Generator(c), -0.1, Field.dirac(g))


class TestGammaOracle:
    def test_constant_coefficients(self):
        dx, t = 0.5, 0.3
        g = GridSpec(dx=dx, dim=1, radius=recommended_radius(t, 1.0, dx))
        c = Coefficients.constant(g, 1.0)
        col = gamma_oracle(c, (2,), t, tol=1e-11)
        for a in (-3, 0, 2, 5):
            want = kernel_nd((a - 2,), t, ConstCoeffs.of(1.0), dx)
            assert col.value((a,)) == pytest.approx(want, rel=1e-9, abs=1e-13)

    def test_propagation(self):
        g, c = small_setup()
        whole = gamma_oracle(c, (0,), 0.4, tol=1e-11)
        part = gamma_oracle(c, (0,), 0.15, tol=1e-11)
        rest = expm_apply(Generator(c), 0.25, part, tol=1e-11)
        assert np.abs(whole.values - rest.values).max() <= 2e-11 * whole.values.max()

    def test_reference_column_regression(self, ac6_coeffs):
        col = gamma_oracle(ac6_coeffs, (0,), 0.25, tol=1e-10)
        for a, want in REFERENCE_COLUMN.items():
            assert col.value((a,)) == pytest.approx(want, rel=5e-10, abs=1e-16)

    def test_nonnegative(self, ac6_coeffs):
        col = gamma_oracle(ac6_coeffs, (0,), 0.25, tol=1e-10)
        assert col.values.min() >= -1e-10


class TestResidual:
    def test_linear_in_time_exact(self):
        g, c = small_setup()
        ones = Field.constant(g, 1.0)
        slices = [Field.constant(g, t) for t in (0.1, 0.2, 0.3)]
        res = residual(slices, [0.1, 0.2, 0.3], c, f=lambda s: ones)
        assert res <= 1e-12

    def test_oracle_slices_second_order(self):
        g, c = small_setup()
        gen = Generator(c)
        rng = np.random.default_rng(5)
        x = g.axis_coordinates()
        length = g.npts * g.dx
        psi = Field(g, 1.0 + 0.5 * np.cos(2 * np.pi * x / length))
        results = []
        for h in (2e-2, 1e-2):
            us = [expm_apply(gen, t, psi, tol=1e-12) for t in (0.3 - h, 0.3, 0.3 + h)]
            results.append(residual(us, [0.3 - h, 0.3, 0.3 + h], c))
        assert results[1] <= results[0] / 3.0  # ~ h^2

    def test_requires_uniform_times(self):
        g, c = small_setup()
        slices = [Field.dirac(g)] * 3
        with pytest.raises(ValueError):
            residual(slices, [0.0, 0.1, 0.3], c)
        with pytest.raises(ValueError):
            residual(slices[:2], [0.0, 0.1], c)


class TestPotentialOracle:
    def test_scalar_decay(self):
        g = GridSpec(dx=0.5, dim=1, radius=8)
        c = Coefficients.constant(g, 1.0)
        lam = 0.8
        pot = np.full(g.shape, lam)
        out = evolve_with_potential(c, pot, None, 0.5, Field.constant(g, 1.0), tol=1e-12)
        assert np.abs(out.values - np.exp(-lam * 0.5)).max() <= 1e-12

    def test_constant_source_equilibrium(self):
        # u' = L u - Y u + f with u = f / Y constant: stationary
        g = GridSpec(dx=0.5, dim=1, radius=8)
        c = Coefficients.constant(g, 1.0)
        pot = np.full(g.shape, 2.0)
        src = np.full(g.shape, 3.0)
        u0 = Field.constant(g, 1.5)
        out = evolve_with_potential(c, pot, src, 0.7, u0, tol=1e-12)
        assert np.abs(out.values - 1.5).max() <= 1e-12
