import math

import numpy as np
import pytest

from phi4sim.gff import ModelParams, lattice_green_zero
from phi4sim.observables import (
    BlockField,
    block_average,
    cosh_products,
    lattice_wick_square,
    log_cosh_products,
    log_mean_exp,
    magnetisation,
    q1,
    q1_all,
    q2,
    q2_all,
    q3,
)
from phi4sim.torus import ConfigurationError, Field, make_blocks, make_grid


@pytest.fixture(scope="module")
def setup():
    g = make_grid(3, 4, 0.5)
    p = ModelParams(beta=2.0, eta=1.0, K=math.inf)
    rng = np.random.default_rng(8)
    f = Field(g, rng.standard_normal(g.shape))
    w = lattice_wick_square(f, p)
    bf = block_average(f, w)
    return g, p, f, w, bf


class TestBlockAverages:
    def test_magnetisation_is_site_mean(self, setup):
        g, p, f, w, bf = setup
        assert magnetisation(f) == pytest.approx(float(f.values.mean()))

    def test_wick_square_subtracts_lattice_tadpole(self, setup):
        g, p, f, w, bf = setup
        t = lattice_green_zero(g, p)
        assert np.allclose(w.values, f.values**2 - t)

    def test_block_integral_equals_scaled_site_sum(self, setup):
        g, p, f, w, bf = setup
        part = bf.partition
        b = part.block_index((1, 2, 0))
        sl = tuple(
            slice(c * g.eps_inv, (c + 1) * g.eps_inv) for c in (1, 2, 0)
        )
        expect = f.values[sl].sum() * g.spacing**g.dim
        assert bf.phi_avg[b] == pytest.approx(expect, rel=1e-12)

    def test_blocks_partition_the_torus(self, setup):
        g, p, f, w, bf = setup
        total = bf.phi_avg.sum()
        assert total == pytest.approx(f.values.sum() * g.spacing**g.dim,
                                      rel=1e-12)

    def test_grid_mismatch_rejected(self, setup):
        g, p, f, w, bf = setup
        other = make_grid(3, 4, 1)
        w2 = Field(other, np.zeros(other.shape))
        with pytest.raises(ConfigurationError):
            block_average(f, w2)

    def test_nonfinite_block_values_rejected(self, setup):
        g, p, f, w, bf = setup
        bad = bf.phi_avg.copy()
        bad[0] = np.nan
        with pytest.raises(ConfigurationError):
            BlockField(bf.partition, bad, bf.wick2_avg)


class TestPenaltyVariables:
    def test_constant_field_q_values(self):
        # for phi = sqrt(beta), block integrals are exact and every penalty
        # reduces to a closed form in the lattice tadpole
        g = make_grid(3, 4, 0.5)
        beta = 2.0
        p = ModelParams(beta=beta, eta=1.0, K=math.inf)
        f = Field(g, np.full(g.shape, math.sqrt(beta)))
        bf = block_average(f, lattice_wick_square(f, p))
        t = lattice_green_zero(g, p)
        assert q1(bf, 0, beta) == pytest.approx(t / math.sqrt(beta))
        assert q2(bf, 0, beta) == pytest.approx(-t / math.sqrt(beta))
        nb = bf.partition.nn[0][0]
        assert q3(bf, 0, nb) == pytest.approx(0.0, abs=1e-12)

    def test_q3_antisymmetric(self, setup):
        g, p, f, w, bf = setup
        a = 0
        b = bf.partition.nn[a][0]
        assert q3(bf, a, b) == pytest.approx(-q3(bf, b, a))

    def test_q3_requires_nearest_neighbours(self, setup):
        g, p, f, w, bf = setup
        a = 0
        non_nn = next(
            b for b in range(bf.partition.n_blocks)
            if b != a and b not in bf.partition.nn[a]
        )
        with pytest.raises(ConfigurationError):
            q3(bf, a, non_nn)

    def test_vector_forms_match_scalar(self, setup):
        g, p, f, w, bf = setup
        beta = p.beta
        v1 = q1_all(bf, beta)
        v2 = q2_all(bf, beta)
        for b in (0, 3, bf.partition.n_blocks - 1):
            assert v1[b] == pytest.approx(q1(bf, b, beta))
            assert v2[b] == pytest.approx(q2(bf, b, beta))


class TestCoshProducts:
    def test_log_product_matches_direct_product(self, setup):
        g, p, f, w, bf = setup
        beta = p.beta
        pairs = [(0, bf.partition.nn[0][0]), (5, bf.partition.nn[5][1])]
        log_val = log_cosh_products(bf, beta, b1=[0, 1], b2=[2], b3=pairs,
                                    a1=0.5, a2=2.0, a3=1.5)
        direct = 1.0
        for b in (0, 1):
            direct *= math.cosh(0.5 * q1(bf, b, beta))
        direct *= math.cosh(2.0 * q2(bf, 2, beta))
        for a, b in pairs:
            direct *= math.cosh(1.5 * q3(bf, a, b))
        assert math.exp(log_val) == pytest.approx(direct, rel=1e-12)
        assert cosh_products(bf, beta, b1=[0, 1], b2=[2], b3=pairs,
                             a1=0.5, a2=2.0, a3=1.5) == pytest.approx(direct)

    def test_log_form_survives_huge_penalties(self):
        g = make_grid(2, 4, 1)
        part = make_blocks(g)
        n = part.n_blocks
        bf = BlockField(part, np.zeros(n), np.full(n, -1e6))
        log_val = log_cosh_products(bf, beta=1.0, b1=list(range(n)))
        # Q1 = (beta - wick2)/sqrt(beta) = 1e6 + 1; cosh(x) ~ e^|x|/2
        assert log_val == pytest.approx(n * (1e6 + 1.0 - math.log(2.0)),
                                        rel=1e-9)
        with pytest.raises(OverflowError):
            cosh_products(bf, beta=1.0, b1=list(range(n)))

    def test_empty_selection_gives_unit_product(self, setup):
        g, p, f, w, bf = setup
        assert log_cosh_products(bf, p.beta) == 0.0
        assert cosh_products(bf, p.beta) == 1.0


class TestLogMeanExp:
    def test_matches_direct_mean(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(100)
        assert log_mean_exp(x) == pytest.approx(math.log(np.mean(np.exp(x))),
                                                rel=1e-12)

    def test_stable_for_large_arguments(self):
        x = np.array([1000.0, 1000.0 + math.log(3.0)])
        expect = 1000.0 + math.log((1.0 + 3.0) / 2.0)
        assert log_mean_exp(x) == pytest.approx(expect, rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_mean_exp([])
