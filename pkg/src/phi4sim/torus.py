"""Discrete torus geometry, field storage, FFT, Fourier multipliers, and block indexing.

Conventions (shared by all modules):

* The torus has side length ``N`` (an integer, in paper units) and lattice
  spacing ``eps`` with ``1/eps`` an integer.  There are ``M = N/eps`` sites
  per axis, placed at cell centres ``x_k = (k + 1/2) * eps``.
* Frequencies are ``n = j / N`` with integer ``j`` running over
  ``-floor(M/2) .. ceil(M/2)-1`` per axis, stored in numpy FFT layout.
* The forward transform is the normalised pairing
  ``F f(n) = (1/M^dim) * sum_k f(x_k) exp(-2 pi i n . x_k)``,
  i.e. the Riemann sum for ``\\int f e_{-n} dxbar`` with ``dxbar = dx/N^dim``.
  Consequently a real field satisfies ``coeffs(-n) = conj(coeffs(n))`` and
  ``f(x) = sum_n coeffs(n) e_n(x)``.

All objects are immutable after construction; every function here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np

__all__ = [
    "ConfigurationError",
    "TorusGrid",
    "Field",
    "SpectralField",
    "CutoffProfile",
    "BlockPartition",
    "make_grid",
    "fft_forward",
    "fft_inverse",
    "apply_multiplier",
    "make_blocks",
]


class ConfigurationError(ValueError):
    """Invalid grid / model configuration."""


def _as_int(x, name: str) -> int:
    if abs(x - round(x)) > 1e-12:
        raise ConfigurationError(f"{name} must be an integer, got {x}")
    return int(round(x))


@dataclass(frozen=True)
class TorusGrid:
    """Discrete d-dimensional torus: side length N, spacing eps, M=N/eps sites per axis."""

    dim: int
    side: int
    eps_inv: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigurationError(f"dim must be 2 or 3, got {self.dim}")
        if self.side < 1 or self.eps_inv < 1:
            raise ConfigurationError("side and 1/eps must be positive integers")

    @property
    def spacing(self) -> float:
        return 1.0 / self.eps_inv

    @property
    def sites_per_axis(self) -> int:
        return self.side * self.eps_inv

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.sites_per_axis,) * self.dim

    @property
    def n_sites(self) -> int:
        return self.sites_per_axis**self.dim

    @property
    def volume(self) -> float:
        return float(self.side**self.dim)

    @property
    def nyquist(self) -> float:
        """Largest per-axis frequency representable on the grid: 1/(2 eps)."""
        return self.eps_inv / 2.0

    @cached_property
    def freq_integers(self) -> np.ndarray:
        """Integer frequencies j per axis in FFT layout: 0,1,..,-floor(M/2),..,-1."""
        m = self.sites_per_axis
        return (np.fft.fftfreq(m) * m).round().astype(np.int64)

    @cached_property
    def freqs(self) -> np.ndarray:
        """Frequency vectors n = j/N, shape grid.shape + (dim,)."""
        ax = self.freq_integers / self.side
        grids = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(grids, axis=-1)

    @cached_property
    def freq_norm2(self) -> np.ndarray:
        """|n|^2 on the frequency grid, shape grid.shape."""
        return np.sum(self.freqs**2, axis=-1)

    def bracket2(self, eta: float) -> np.ndarray:
        """<n>^2 = eta + 4 pi^2 |n|^2 on the frequency grid."""
        return eta + 4.0 * np.pi**2 * self.freq_norm2

    @cached_property
    def site_coords(self) -> np.ndarray:
        """Cell-centred site coordinates, shape grid.shape + (dim,)."""
        ax = (np.arange(self.sites_per_axis) + 0.5) * self.spacing
        grids = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(grids, axis=-1)

    @cached_property
    def _halfcell_phase(self) -> np.ndarray:
        """Per-mode phase exp(-i pi sum_i j_i / M) from the half-cell site offset."""
        m = self.sites_per_axis
        ax = np.exp(-1j * np.pi * self.freq_integers / m)
        out = np.ones((), dtype=complex)
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = m
            out = out * ax.reshape(shape)
        return out

    def lattice_eigenvalues(self, eta: float = 0.0) -> np.ndarray:
        """Eigenvalues of -Delta^eps + eta: (4/eps^2) sum_i sin^2(pi eps n_i) + eta."""
        e = self.spacing
        s = np.sin(np.pi * e * self.freqs) ** 2
        return (4.0 / e**2) * np.sum(s, axis=-1) + eta

    def plane_wave(self, j: tuple[int, ...]) -> np.ndarray:
        """Complex mode e_n(x) = exp(2 pi i n.x) with n = j/N on the site grid."""
        n = np.asarray(j, dtype=float) / self.side
        return np.exp(2j * np.pi * np.tensordot(self.site_coords, n, axes=([-1], [0])))


def make_grid(dim: int, side: float, spacing: float) -> TorusGrid:
    """Build a grid; side and 1/spacing must be positive integers."""
    n = _as_int(side, "side")
    if spacing <= 0:
        raise ConfigurationError("spacing must be positive")
    eps_inv = _as_int(1.0 / spacing, "1/spacing")
    return TorusGrid(dim=dim, side=n, eps_inv=eps_inv)


@dataclass(frozen=True)
class Field:
    """Real-valued lattice configuration on a grid (row-major site array)."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("field values must be finite")


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients (dxbar convention) on the truncated frequency lattice."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ConfigurationError(
                f"coeff shape {self.coeffs.shape} != grid shape {self.grid.shape}")


def fft_forward(f: Field) -> SpectralField:
    g = f.grid
    coeffs = np.fft.fftn(f.values) / g.n_sites * g._halfcell_phase
    return SpectralField(grid=g, coeffs=coeffs)


def fft_inverse(sf: SpectralField) -> Field:
    g = sf.grid
    values = np.fft.ifftn(sf.coeffs / g._halfcell_phase * g.n_sites)
    return Field(grid=g, values=np.ascontiguousarray(values.real))


def inner_product(f: Field, g: Field) -> float:
    """dxbar-normalised inner product int f g dxbar = mean over sites."""
    return float(np.mean(f.values * g.values))


Symbol = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _symbol_values(grid: TorusGrid, symbol: Symbol) -> np.ndarray:
    vals = symbol(grid.freqs) if callable(symbol) else np.asarray(symbol)
    vals = np.broadcast_to(vals, grid.shape)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("multiplier symbol is not finite on the grid")
    return vals


def apply_multiplier(sf: SpectralField, symbol: Symbol) -> SpectralField:
    """Scale coeffs(n) by symbol(n); symbol is an array on the grid or a callable of n-vectors."""
    vals = _symbol_values(sf.grid, symbol)
    return SpectralField(grid=sf.grid, coeffs=sf.coeffs * vals)


# -- smooth ultraviolet cutoff profile ---------------------------------------

def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C^inf step: 0 for t<=0, 1 for t>=1, exp(-1/t)/(exp(-1/t)+exp(-1/(1-t))) between."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    out[t <= 0.0] = 0.0
    out[t >= 1.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out


def _smooth_step_deriv(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    mid = (t > 1e-8) & (t < 1.0 - 1e-8)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a * b * (1.0 / tm**2 + 1.0 / (1.0 - tm) ** 2) / (a + b) ** 2
    return out


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth radial cutoff: rho=1 on [0, c_rho), rho=0 outside [0, C_rho), non-increasing.

    The transition uses the standard C^inf bump step; the plateau radius c_rho
    and outer radius C_rho are configurable (the defaults are c_rho=1/2, C_rho=1).
    """

    c_rho: float = 0.5
    C_rho: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.c_rho < self.C_rho):
            raise ConfigurationError("need 0 < c_rho < C_rho")

    def value(self, r) -> np.ndarray:
        t = (np.asarray(r, dtype=float) - self.c_rho) / (self.C_rho - self.c_rho)
        return 1.0 - _smooth_step(t)

    def derivative(self, r) -> np.ndarray:
        t = (np.asarray(r, dtype=float) - self.c_rho) / (self.C_rho - self.c_rho)
        return -_smooth_step_deriv(t) / (self.C_rho - self.c_rho)

    def symbol(self, grid: TorusGrid, cutoff: float) -> np.ndarray:
        """rho_K(n) = rho(|n|/K) on the grid; K=inf means identically 1."""
        if np.isinf(cutoff):
            return np.ones(grid.shape)
        if cutoff <= 0.0:
            raise ConfigurationError("cutoff K must be positive (or inf)")
        return self.value(np.sqrt(grid.freq_norm2) / cutoff)


# -- unit-block partition ------------------------------------------------------

@dataclass(frozen=True)
class BlockPartition:
    """Unit-cube tiling of the torus with nearest-neighbour and *-adjacency tables.

    Blocks are indexed row-major over integer corners in {0..N-1}^dim. For
    N >= 3 every *-ball has exactly 3^dim members (27 in 3D, 9 in 2D).
    """

    grid: TorusGrid
    corners: np.ndarray = field(repr=False)        # (n_blocks, dim) int
    nn: np.ndarray = field(repr=False)             # (n_blocks, 2*dim) int
    star_balls: np.ndarray = field(repr=False)     # (n_blocks, ball_size) int

    @property
    def n_blocks(self) -> int:
        return self.corners.shape[0]

    @property
    def side(self) -> int:
        return self.grid.side

    def block_index(self, corner) -> int:
        n = self.side
        idx = 0
        for c in corner:
            idx = idx * n + (int(c) % n)
        return idx

    @cached_property
    def block_shape(self) -> tuple[int, ...]:
        return (self.side,) * self.grid.dim

    def block_integrals(self, values: np.ndarray) -> np.ndarray:
        """Per-block integrals int_box f dx = eps^dim * (site sum), unit block volume.

        Returns a flat array of length n_blocks (row-major over corners).
        """
        n, s, d = self.side, self.grid.eps_inv, self.grid.dim
        v = values.reshape(*sum(((n, s) for _ in range(d)), ()))
        sum_axes = tuple(2 * a + 1 for a in range(d))
        return (v.sum(axis=sum_axes) * self.grid.spacing**d).reshape(-1)

    def spread_to_sites(self, block_values: np.ndarray) -> np.ndarray:
        """Piecewise-constant extension of per-block values to the site grid."""
        n, s, d = self.side, self.grid.eps_inv, self.grid.dim
        v = block_values.reshape((n,) * d)
        for a in range(d):
            v = np.repeat(v, s, axis=a)
        return v

    @cached_property
    def star_nn_pairs(self) -> list[np.ndarray]:
        """For each block, the unordered nearest-neighbour pairs within its *-ball.

        54 pairs in 3D (N>=3), 12 in 2D.
        """
        out = []
        for b in range(self.n_blocks):
            ball = set(self.star_balls[b].tolist())
            pairs = set()
            for bb in ball:
                for nn in self.nn[bb]:
                    if int(nn) in ball:
                        pairs.add((min(bb, int(nn)), max(bb, int(nn))))
            out.append(np.array(sorted(pairs), dtype=np.int64))
        return out


def make_blocks(grid: TorusGrid) -> BlockPartition:
    """Tile the torus into N^dim unit blocks and build adjacency tables."""
    n, d = grid.side, grid.dim
    corners = np.stack(np.meshgrid(*([np.arange(n)] * d), indexing="ij"),
                       axis=-1).reshape(-1, d)

    def idx_of(c):
        out = np.zeros(c.shape[:-1], dtype=np.int64)
        for a in range(d):
            out = out * n + (c[..., a] % n)
        return out

    nn_offsets = []
    for a in range(d):
        for s in (-1, 1):
            off = np.zeros(d, dtype=np.int64)
            off[a] = s
            nn_offsets.append(off)
    nn = np.stack([idx_of(corners + off) for off in nn_offsets], axis=1)

    star_offsets = np.stack(np.meshgrid(*([np.array([-1, 0, 1])] * d),
                                        indexing="ij"), axis=-1).reshape(-1, d)
    star_raw = np.stack([idx_of(corners + off) for off in star_offsets], axis=1)
    # set semantics: duplicates only arise for N < 3
    if n >= 3:
        star_balls = np.sort(star_raw, axis=1)
    else:
        star_balls = np.stack([np.unique(row) for row in star_raw])

    return BlockPartition(grid=grid, corners=corners, nn=nn, star_balls=star_balls)
