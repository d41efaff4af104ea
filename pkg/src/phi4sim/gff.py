"""Gaussian free field sampling and renormalisation constants.

Covers the cutoff free field with per-mode weights rho_K^2(n)/<n>^2 where
<n>^2 = eta + 4 pi^2 |n|^2, the first renormalisation constant (tadpole),
the two-loop constrained frequency sum (sunset) with gamma = -48 * sunset,
Wick powers, and the lattice-propagator analogues used for the lattice
counterterm delta_m2(eps, eta) = (12/beta) G_eps(0) + (2/beta^2) gamma_lat
(the gamma_lat term is dropped in 2D, where Wick ordering suffices).

Note: changing eta shifts the counterterms by a bounded amount; no attempt
is made to normalise constants across different eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .torus import (ConfigurationError, CutoffProfile, Field, SpectralField,
                    TorusGrid, fft_forward, fft_inverse)

__all__ = [
    "ModelParams",
    "RenormConstants",
    "tadpole",
    "sunset",
    "gamma",
    "sample_gff",
    "wick_power",
    "lattice_green_zero",
    "lattice_sunset",
    "lattice_mass_counterterm",
    "compute_renorm_constants",
    "RENORM_CSV_HEADER",
]


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature, mass, UV cutoff (math.inf = no Fourier cutoff), profile."""

    beta: float
    eta: float
    K: float = math.inf
    profile: CutoffProfile = field(default_factory=CutoffProfile)

    def __post_init__(self):
        if self.beta <= 0 or self.eta <= 0:
            raise ConfigurationError("beta and eta must be positive")
        if not (self.K > 0):
            raise ConfigurationError("K must be positive (math.inf allowed)")

    def rho(self, grid: TorusGrid) -> np.ndarray:
        """rho_K on the grid frequencies."""
        return self.profile.symbol(grid, self.K)


def mode_weights(grid: TorusGrid, params: ModelParams) -> np.ndarray:
    """w(n) = rho_K^2(n) / <n>^2 on the frequency grid."""
    return params.rho(grid) ** 2 / grid.bracket2(params.eta)


def tadpole(grid: TorusGrid, params: ModelParams) -> float:
    """<|>_K = E[phi_K^2(0)] = N^-dim sum_n rho_K^2(n)/<n>^2 (exact finite sum)."""
    return float(mode_weights(grid, params).sum() / grid.volume)


def _constrained_triple_sum(grid: TorusGrid, w: np.ndarray, modular: bool) -> float:
    """sum over n1+n2+n3=0 of w(n1)w(n2)w(n3).

    modular=False: exact conservation on the truncated integer-frequency
    lattice, via a 4x zero-padded FFT self-convolution (no aliasing).
    modular=True: conservation modulo the Brillouin zone (the physical rule
    for lattice-propagator diagrams), via plain FFT.
    """
    m, d = grid.sites_per_axis, grid.dim
    if modular:
        big = np.fft.ifftn(w) * grid.n_sites      # W(x) = sum_n w_n e^(2 pi i jk/M)
        return float(np.mean(big**3).real)
    pad = 4 * m
    idx = np.asarray(grid.freq_integers) % pad
    wp = np.zeros((pad,) * d)
    wp[np.ix_(*([idx] * d))] = w
    # W is complex in general: for even M the -M/2 mode has no +M/2 partner
    big = np.fft.ifftn(wp) * pad**d
    return float(np.mean(big**3).real)


def sunset(grid: TorusGrid, params: ModelParams, modular: bool = False) -> float:
    """Two-loop diagram N^-2dim sum_{n1+n2+n3=0} prod_i rho_K^2(n_i)/<n_i>^2."""
    w = mode_weights(grid, params)
    return _constrained_triple_sum(grid, w, modular) / grid.volume**2


def gamma(grid: TorusGrid, params: ModelParams) -> float:
    """Second-order mass renormalisation gamma_K = -48 * sunset."""
    return -48.0 * sunset(grid, params)


def sample_gff(grid: TorusGrid, params: ModelParams,
               rng: np.random.Generator) -> Field:
    """Draw one cutoff free field: Gaussian modes with Var Ff(n) = w(n)/N^dim.

    Sampling multiplies the transform of site white noise by
    eps^(-dim/2) rho_K(n)/<n>, which yields the correct joint law including
    Hermitian symmetry and the real self-conjugate modes.
    """
    white = rng.standard_normal(grid.shape)
    ghat = fft_forward(Field(grid, white))
    scale = params.rho(grid) / np.sqrt(grid.bracket2(params.eta))
    scale = scale * grid.eps_inv ** (grid.dim / 2)
    return fft_inverse(SpectralField(grid, ghat.coeffs * scale))


def sample_gff_spectral(grid: TorusGrid, params: ModelParams,
                        rng: np.random.Generator) -> SpectralField:
    """Same law as sample_gff but returned in spectral form."""
    white = rng.standard_normal(grid.shape)
    ghat = fft_forward(Field(grid, white))
    scale = params.rho(grid) / np.sqrt(grid.bracket2(params.eta))
    scale = scale * grid.eps_inv ** (grid.dim / 2)
    return SpectralField(grid, ghat.coeffs * scale)


def wick_power(f: Field, p: int, tadpole_value: float) -> Field:
    """Wick powers :phi^p: for p in {2,3,4} with contraction parameter t >= 0."""
    if tadpole_value < 0:
        raise ConfigurationError("tadpole must be non-negative")
    v, t = f.values, tadpole_value
    if p == 2:
        out = v**2 - t
    elif p == 3:
        out = v**3 - 3.0 * t * v
    elif p == 4:
        out = v**4 - 6.0 * t * v**2 + 3.0 * t**2
    else:
        raise ValueError(f"Wick power p must be 2, 3 or 4, got {p}")
    return Field(f.grid, out)


def lattice_green_zero(grid: TorusGrid, params: ModelParams) -> float:
    """Diagonal of (-Delta^eps + eta)^-1 at a site: N^-dim sum_n 1/(lambda_n + eta)."""
    return float(np.sum(1.0 / grid.lattice_eigenvalues(params.eta)) / grid.volume)


def lattice_sunset(grid: TorusGrid, params: ModelParams) -> float:
    """Sunset built from the lattice propagator, momentum conserved mod the Brillouin zone."""
    w = 1.0 / grid.lattice_eigenvalues(params.eta)
    return _constrained_triple_sum(grid, w, modular=True) / grid.volume**2


def lattice_mass_counterterm(grid: TorusGrid, params: ModelParams) -> float:
    """delta_m2(eps, eta): (12/beta) G_eps(0) + (2/beta^2) gamma_lat  (3D); the
    gamma_lat term is 0 in 2D."""
    green = lattice_green_zero(grid, params)
    out = 12.0 / params.beta * green
    if grid.dim == 3:
        out += 2.0 / params.beta**2 * (-48.0 * lattice_sunset(grid, params))
    return out


@dataclass(frozen=True)
class RenormConstants:
    tadpole: float
    sunset: float
    gamma: float
    lattice_mass: float

    def __post_init__(self):
        assert self.tadpole >= 0 and self.sunset >= 0
        assert self.gamma == -48.0 * self.sunset


RENORM_CSV_HEADER = "dim,N,eps,eta,K,tadpole,sunset,gamma,lattice_mass"


def compute_renorm_constants(grid: TorusGrid, params: ModelParams) -> RenormConstants:
    s = sunset(grid, params)
    return RenormConstants(
        tadpole=tadpole(grid, params),
        sunset=s,
        gamma=-48.0 * s,
        lattice_mass=lattice_mass_counterterm(grid, params),
    )


def renorm_csv_row(grid: TorusGrid, params: ModelParams,
                   constants: RenormConstants) -> str:
    k = "inf" if math.isinf(params.K) else repr(params.K)
    return (f"{grid.dim},{grid.side},{grid.spacing!r},{params.eta!r},{k},"
            f"{constants.tadpole!r},{constants.sunset!r},"
            f"{constants.gamma!r},{constants.lattice_mass!r}")
