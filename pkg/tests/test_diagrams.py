import math

import numpy as np
import pytest

from phi4sim.diagrams import (
    ScaleGrid,
    dealiased_wick_cube,
    fit_decay_exponent,
    jay_squared,
    jay_squared_quadrature,
    jay_squared_radial,
    sample_scale_flow,
    trident_fourier_variance,
    variance_ladder,
)
from phi4sim.gff import ModelParams, tadpole
from phi4sim.torus import ConfigurationError, Field, fft_forward, make_grid


class TestScaleGrid:
    def test_geometric_spans_octaves(self):
        sg = ScaleGrid.geometric(4.0, m=9, octaves=8.0)
        assert sg.knots[0] == 0.0
        assert sg.knots[1] == pytest.approx(4.0 * 2**-8)
        assert sg.knots[-1] == pytest.approx(4.0)

    def test_doubling_m_refines(self):
        coarse = ScaleGrid.geometric(2.0, m=8)
        fine = ScaleGrid.geometric(2.0, m=16)
        assert fine.knots.size == coarse.knots.size + 8

    def test_non_monotone_rejected(self):
        with pytest.raises(ConfigurationError):
            ScaleGrid(np.array([0.0, 1.0, 0.5]))

    def test_missing_zero_rejected(self):
        with pytest.raises(ConfigurationError):
            ScaleGrid(np.array([0.5, 1.0]))


class TestScaleDensity:
    def test_integral_reconstructs_mode_weight(self):
        # integrating the squared scale density over k in (0, K] must give
        # back rho_K^2 / <n>^2 exactly, for every frequency
        p = ModelParams(beta=2.0, eta=1.0, K=2.0)
        for r in (0.3, 0.9, 1.4, 1.9):
            quad = jay_squared_quadrature(r, p.K, p)
            b2 = p.eta + 4 * math.pi**2 * r**2
            target = p.profile.value(np.array([r / p.K]))[0] ** 2 / b2
            assert quad == pytest.approx(target, rel=1e-8)

    def test_support_window(self):
        p = ModelParams(beta=2.0, eta=1.0, K=2.0)
        k = 1.0
        # support of the k-slice is c_rho k < |n| < C_rho k
        assert jay_squared_radial(np.array([0.3]), k, p)[0] == 0.0
        assert jay_squared_radial(np.array([0.7]), k, p)[0] > 0.0
        assert jay_squared_radial(np.array([1.1]), k, p)[0] == 0.0

    def test_grid_version_matches_radial(self):
        g = make_grid(2, 4, 0.5)
        p = ModelParams(beta=2.0, eta=1.0, K=1.0)
        grid_vals = jay_squared(g, 0.8, p)
        radial = jay_squared_radial(np.sqrt(g.freq_norm2), 0.8, p)
        assert np.allclose(grid_vals, radial)


class TestDealiasedCube:
    def test_cube_of_single_mode_has_no_aliasing(self):
        # (e_j)^3 = e_{3j}; if 3j falls outside the grid the dealiased cube
        # must drop it rather than wrap it around
        g = make_grid(2, 4, 0.5)
        coeffs = np.zeros(g.shape, dtype=complex)
        coeffs[3, 0] = 1.0  # 3*3 = 9 -> aliases to 1 on an 8-site axis
        cube = dealiased_wick_cube(g, coeffs, t=0.0)
        assert abs(cube[1, 0]) < 1e-14

    def test_matches_direct_cube_when_no_aliasing(self):
        from phi4sim.torus import SpectralField, fft_inverse

        g = make_grid(2, 4, 0.5)
        rng = np.random.default_rng(0)
        # truncate a real field to |j| <= 1 so the cube fits inside the grid;
        # index-symmetric truncation preserves the Hermitian symmetry
        full = fft_forward(Field(g, rng.standard_normal(g.shape))).coeffs
        coeffs = np.zeros(g.shape, dtype=complex)
        for jx in (-1, 0, 1):
            for jy in (-1, 0, 1):
                coeffs[jx, jy] = full[jx, jy]
        phys = fft_inverse(SpectralField(grid=g, coeffs=coeffs)).values
        direct = fft_forward(Field(grid=g, values=phys**3)).coeffs
        deal = dealiased_wick_cube(g, coeffs, t=0.0)
        assert np.allclose(deal, direct, atol=1e-12)


@pytest.fixture(scope="module")
def flows():
    g = make_grid(3, 4, 0.5)
    p = ModelParams(beta=1.0, eta=1.0, K=4.0)
    sg = ScaleGrid.geometric(4.0, m=32)
    rng = np.random.default_rng(42)
    return g, p, [sample_scale_flow(g, p, sg, rng) for _ in range(150)]


class TestScaleFlow:
    def test_endpoint_matches_gff_variance(self, flows):
        g, p, fl = flows
        acc = np.zeros(g.shape)
        for flow in fl:
            acc += np.abs(flow.lollipop[-1]) ** 2
        var = acc / len(fl)
        # per-coefficient law of the cutoff free field: rho_K^2/(<n>^2 N^d),
        # with the zero mode carrying its full 1/(eta N^d) variance
        target = p.rho(g) ** 2 / (g.bracket2(p.eta) * g.volume)
        stderr = target * math.sqrt(2.0 / len(fl))
        assert np.all(np.abs(var - target) <= 5.0 * stderr + 1e-12)

    def test_running_tadpole_matches_closed_form(self, flows):
        g, p, fl = flows
        assert fl[0].tadpoles[-1] == pytest.approx(tadpole(g, p), rel=1e-12)

    def test_variance_ladder_decays(self, flows):
        g, p, fl = flows
        rows = variance_ladder(fl, p.eta)
        slope, stderr = fit_decay_exponent(rows[1:])
        assert slope < 0.0
        assert stderr < abs(slope)


class TestFits:
    def test_fit_recovers_planted_exponent(self):
        xs = np.array([1.0, 2.0, 4.0, 8.0])
        rows = [(x, 3.0 * x**-4.0, 0.1 * x**-4.0) for x in xs]
        slope, stderr = fit_decay_exponent(rows)
        assert slope == pytest.approx(-4.0, abs=1e-9)

    def test_batch_variance_reasonable(self):
        g = make_grid(2, 4, 0.5)
        p = ModelParams(beta=1.0, eta=1.0, K=1.0)
        sg = ScaleGrid.geometric(1.0, m=16)
        rng = np.random.default_rng(1)
        fl = [sample_scale_flow(g, p, sg, rng) for _ in range(60)]
        mean, se = trident_fourier_variance(fl, (1, 0), n_batches=10)
        assert mean >= 0.0 and se >= 0.0
