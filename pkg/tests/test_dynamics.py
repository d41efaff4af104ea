import math

import numpy as np
import pytest

from phi4sim.dynamics import (
    Checkpoint,
    DivergedError,
    SimConfig,
    discrete_laplacian,
    energy_density,
    read_checkpoint,
    run,
    stability_limit,
    step_galerkin,
    step_lattice,
    step_rng,
    write_checkpoint,
)
from phi4sim.gff import ModelParams
from phi4sim.torus import ConfigurationError, Field, fft_forward, make_grid


class ZeroNoise:
    """Drop-in rng whose Gaussian draws are all zero (isolates the drift)."""

    def standard_normal(self, shape):
        return np.zeros(shape)


def _params(beta=2.0, eta=1.0, K=math.inf):
    return ModelParams(beta=beta, eta=eta, K=K)


def _config(grid, scheme, dt, n_steps, **kw):
    params = kw.pop("params", _params())
    return SimConfig(grid=grid, params=params, scheme=scheme, dt=dt,
                     n_steps=n_steps, **kw)


class TestConfigValidation:
    def test_unknown_scheme_rejected(self):
        g = make_grid(2, 4, 1)
        with pytest.raises(ConfigurationError):
            _config(g, "implicit", 0.01, 10)

    def test_lattice_stability_bound_enforced(self):
        g = make_grid(2, 4, 0.5)
        limit = stability_limit(g)
        with pytest.raises(ConfigurationError):
            _config(g, "lattice", limit, 10)
        _config(g, "lattice", 0.5 * limit, 10)  # admissible

    def test_galerkin_cutoff_above_nyquist_rejected(self):
        g = make_grid(2, 4, 1)  # Nyquist 0.5
        with pytest.raises(ConfigurationError):
            _config(g, "galerkin", 0.01, 10, params=_params(K=1.0))
        _config(g, "galerkin", 0.01, 10, params=_params(K=0.5))

    def test_bad_thin_and_seed_rejected(self):
        g = make_grid(2, 4, 1)
        with pytest.raises(ConfigurationError):
            _config(g, "galerkin", 0.01, 10, params=_params(K=0.5), thin=0)
        with pytest.raises(ConfigurationError):
            _config(g, "galerkin", 0.01, 10, params=_params(K=0.5), seed=2**64)

    def test_mismatched_initial_grid_rejected(self):
        g = make_grid(2, 4, 1)
        other = make_grid(2, 8, 1)
        cfg = _config(g, "lattice", 0.01, 5)
        with pytest.raises(ConfigurationError):
            run(cfg, initial=Field(other, np.zeros(other.shape)))


class TestDrift:
    def test_laplacian_annihilates_constants(self):
        g = make_grid(3, 4, 0.5)
        lap = discrete_laplacian(g, np.full(g.shape, 1.7))
        assert np.allclose(lap, 0.0, atol=1e-13)

    def test_laplacian_plane_wave_eigenvalue(self):
        g = make_grid(2, 4, 0.5)
        j = (1, 2)
        wave = np.real(g.plane_wave(j))
        lap = discrete_laplacian(g, wave)
        lam = -sum(
            4.0 / g.spacing**2
            * math.sin(math.pi * ji * g.spacing / g.side) ** 2
            for ji in j
        )
        assert np.allclose(lap, lam * wave, atol=1e-10)

    def test_well_bottom_is_fixed_point_without_counterterms(self):
        # with the bare linear coefficient 4 the drift vanishes at +/- sqrt(beta)
        g = make_grid(2, 4, 0.5)
        cfg = _config(g, "lattice", 0.01, 1, linear_override=4.0)
        phi = Field(g, np.full(g.shape, math.sqrt(cfg.params.beta)))
        out = step_lattice(phi, cfg, ZeroNoise())
        assert np.allclose(out.values, phi.values, atol=1e-13)

    def test_drift_is_odd_under_sign_flip(self):
        g = make_grid(2, 4, 0.5)
        rng = np.random.default_rng(3)
        vals = rng.standard_normal(g.shape)
        for scheme, stepper, params in (
            ("lattice", step_lattice, _params()),
            ("galerkin", step_galerkin, _params(K=0.8)),
        ):
            cfg = _config(g, scheme, 0.01, 1, params=params)
            plus = stepper(Field(g, vals), cfg, ZeroNoise()).values
            minus = stepper(Field(g, -vals), cfg, ZeroNoise()).values
            assert np.allclose(minus, -plus, atol=1e-12)

    def test_galerkin_linear_flow_is_exact(self):
        g = make_grid(2, 4, 0.5)
        cfg = _config(g, "galerkin", 0.3, 1, params=_params(K=0.8),
                      nonlinearity=False)
        rng = np.random.default_rng(5)
        phi = Field(g, rng.standard_normal(g.shape))
        out = step_galerkin(phi, cfg, ZeroNoise())
        c0 = fft_forward(phi).coeffs
        c1 = fft_forward(out).coeffs
        decay = np.exp(-cfg.dt * g.bracket2(cfg.params.eta))
        assert np.allclose(c1, decay * c0, atol=1e-12)

    def test_galerkin_drift_first_order_over_fixed_time(self):
        # local defect O(dt^2) means the error over a fixed time window
        # halves when dt halves
        g = make_grid(2, 4, 0.5)
        rng = np.random.default_rng(7)
        phi = Field(g, 0.5 * rng.standard_normal(g.shape))
        params = _params(K=0.8)

        def advance(dt, n):
            cfg = _config(g, "galerkin", dt, 1, params=params)
            f = phi
            for _ in range(n):
                f = step_galerkin(f, cfg, ZeroNoise())
            return f.values

        ref = advance(0.04 / 512, 512)
        err1 = np.max(np.abs(advance(0.04, 1) - ref))
        err2 = np.max(np.abs(advance(0.02, 2) - ref))
        assert 1.6 < err1 / err2 < 2.6

    def test_divergence_raises_with_step(self):
        g = make_grid(2, 4, 0.5)
        cfg = _config(g, "lattice", 0.01, 5)
        huge = Field(g, np.full(g.shape, 1e160))
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergedError) as exc:
                run(cfg, initial=huge)
        assert exc.value.step == 0


class TestStationaryLaw:
    def test_lattice_linear_dynamics_match_exact_discrete_variance(self):
        # pure Ornstein-Uhlenbeck update per lattice eigenmode: the Euler
        # chain x -> (1 - dt*lam) x + noise has a closed-form stationary
        # variance including the O(dt) bias, so the oracle is exact
        g = make_grid(2, 4, 1)
        eta = 1.0
        dt = 0.4 * stability_limit(g)
        cfg = _config(g, "lattice", dt, 6000, params=_params(eta=eta),
                      burn_in=1000, thin=5, seed=11,
                      nonlinearity=False, linear_override=-eta)
        res = run(cfg)
        sq = np.array([np.mean(f.values**2) for f in res.emitted])
        lam = g.lattice_eigenvalues(eta).reshape(-1)
        per_mode = (2.0 * dt / g.spacing**g.dim / g.n_sites) / (
            1.0 - (1.0 - dt * lam) ** 2
        )
        target = per_mode.sum()
        nb = 20
        bm = np.array([b.mean() for b in np.array_split(sq, nb)])
        stderr = bm.std(ddof=1) / math.sqrt(nb)
        assert abs(sq.mean() - target) < 4.0 * stderr

    def test_galerkin_mode_variances_match_free_field(self):
        # the noise is unfiltered (the cutoff acts on the interaction only),
        # so the linear dynamics target the uncut free-field law per mode
        g = make_grid(2, 4, 1)
        params = _params(eta=1.0, K=math.inf)
        cfg = _config(g, "galerkin", 0.5, 8000, params=params,
                      burn_in=1500, thin=5, seed=13, nonlinearity=False)
        res = run(cfg)
        coeffs = np.stack([fft_forward(f).coeffs for f in res.emitted])
        b2 = g.bracket2(params.eta)
        target = 1.0 / (b2 * g.volume)
        emp = np.mean(np.abs(coeffs) ** 2, axis=0)
        for idx in ((0, 0), (1, 0), (1, 1), (2, 1)):
            nb = 20
            per = np.abs(coeffs[(slice(None),) + idx]) ** 2
            bm = np.array([b.mean() for b in np.array_split(per, nb)])
            stderr = bm.std(ddof=1) / math.sqrt(nb)
            assert abs(emp[idx] - target[idx]) < 4.0 * stderr


class TestDriver:
    def test_emission_schedule(self):
        g = make_grid(2, 4, 1)
        cfg = _config(g, "lattice", 0.01, 10, burn_in=4, thin=2, seed=1)
        res = run(cfg)
        assert [r.step for r in res.records] == [6, 8, 10]
        assert res.final_step == 10

    def test_bitwise_determinism(self):
        g = make_grid(2, 4, 1)
        cfg = _config(g, "lattice", 0.01, 50, seed=99)
        a = run(cfg).final_field.values
        b = run(cfg).final_field.values
        assert np.array_equal(a, b)

    def test_step_rng_blocks_are_disjoint(self):
        a = step_rng(7, 3).standard_normal(8)
        b = step_rng(7, 4).standard_normal(8)
        c = step_rng(7, 3).standard_normal(8)
        assert np.array_equal(a, c)
        assert not np.array_equal(a, b)

    def test_energy_density_constant_field(self):
        g = make_grid(2, 4, 1)
        beta = 2.0
        vals = np.full(g.shape, 0.5)
        expect = (0.25 - beta) ** 2 / beta
        assert energy_density(g, vals, beta) == pytest.approx(expect)


class TestCheckpoints:
    def test_roundtrip_is_bit_exact(self, tmp_path):
        g = make_grid(3, 4, 1)
        cfg = _config(g, "lattice", 0.01, 1, seed=21)
        rng = np.random.default_rng(0)
        field = Field(g, rng.standard_normal(g.shape))
        path = str(tmp_path / "state.phi4")
        write_checkpoint(path, cfg, field, step=42)
        ck = read_checkpoint(path)
        assert isinstance(ck, Checkpoint)
        assert ck.step == 42
        assert ck.seed == 21
        assert ck.scheme == "lattice"
        assert ck.beta == cfg.params.beta
        assert ck.grid == g
        assert np.array_equal(ck.field.values, field.values)

    def test_resume_reproduces_uninterrupted_run(self, tmp_path):
        g = make_grid(2, 4, 1)
        cfg = _config(g, "lattice", 0.01, 200, seed=5, checkpoint_every=50)
        full = run(cfg, checkpoint_dir=str(tmp_path))
        ck = read_checkpoint(str(tmp_path / "ckpt_000000000100.phi4"))
        resumed = run(cfg, initial=ck.field, start_step=ck.step)
        assert np.array_equal(resumed.final_field.values,
                              full.final_field.values)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "short.phi4"
        path.write_bytes(b"PHI4")
        with pytest.raises(ConfigurationError):
            read_checkpoint(str(path))

    def test_bad_magic_rejected(self, tmp_path):
        g = make_grid(2, 4, 1)
        cfg = _config(g, "lattice", 0.01, 1)
        path = str(tmp_path / "state.phi4")
        write_checkpoint(path, cfg, Field(g, np.zeros(g.shape)), step=0)
        raw = bytearray(open(path, "rb").read())
        raw[:4] = b"NOPE"
        open(path, "wb").write(bytes(raw))
        with pytest.raises(ConfigurationError):
            read_checkpoint(path)

    def test_bad_version_rejected(self, tmp_path):
        g = make_grid(2, 4, 1)
        cfg = _config(g, "lattice", 0.01, 1)
        path = str(tmp_path / "state.phi4")
        write_checkpoint(path, cfg, Field(g, np.zeros(g.shape)), step=0)
        raw = bytearray(open(path, "rb").read())
        raw[4:8] = (255).to_bytes(4, "little")
        open(path, "wb").write(bytes(raw))
        with pytest.raises(ConfigurationError):
            read_checkpoint(path)

    def test_payload_size_mismatch_rejected(self, tmp_path):
        g = make_grid(2, 4, 1)
        cfg = _config(g, "lattice", 0.01, 1)
        path = str(tmp_path / "state.phi4")
        write_checkpoint(path, cfg, Field(g, np.zeros(g.shape)), step=0)
        raw = open(path, "rb").read()
        open(path, "wb").write(raw[:-8])
        with pytest.raises(ConfigurationError):
            read_checkpoint(path)
