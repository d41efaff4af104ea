"""Scale-flow construction of the cutoff free field and the cubic flow diagram.

The auxiliary scale k runs from 0 to K.  Per mode, the squared flow symbol is

    J_k^2(n) = d/dk [rho^2(|n|/k)] / <n>^2 ,

whose k-integral over (0, K] telescopes to rho_K^2(n)/<n>^2, so the field
built from independent Gaussian increments on a knot grid has, at the final
knot, exactly the law of the cutoff free field.  The zero mode is flat in k
(rho_k(0)=1 for all k) and is seeded once at the first knot with its full
variance so that the endpoint law matches sample_gff exactly.

The cubic flow diagram is accumulated with a left-point rule:

    D_K(n) ~= sum_j  Jbar_j^2(n) * F[wick3(field_j)](n) * dk_j

where Jbar_j^2 * dk_j = (rho_{k_{j+1}}^2 - rho_{k_j}^2)/<n>^2 is the exact
interval-average weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .gff import ModelParams, wick_power
from .torus import (ConfigurationError, Field, SpectralField, TorusGrid,
                    fft_forward, fft_inverse)

__all__ = [
    "ScaleGrid",
    "ScaleFlow",
    "jay_squared",
    "jay_squared_radial",
    "sample_scale_flow",
    "trident_fourier_variance",
    "variance_ladder",
    "fit_decay_exponent",
]

_NEG_TOL = 1e-12


@dataclass(frozen=True)
class ScaleGrid:
    """Increasing cutoff knots 0 = k_0 < k_1 < ... < k_m = K."""

    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 1 or len(k) < 2 or k[0] != 0.0 or np.any(np.diff(k) <= 0):
            raise ConfigurationError(
                "knots must be strictly increasing and start at 0")
        object.__setattr__(self, "knots", k)

    @classmethod
    def geometric(cls, K: float, m: int = 24, octaves: float = 8.0) -> "ScaleGrid":
        """m geometric knots spanning [K 2^-octaves, K], plus k_0 = 0.

        Fixing the octave span (rather than tying it to m) makes doubling m
        refine the ladder, so a Richardson consistency check is meaningful.
        """
        expo = np.linspace(-octaves, 0.0, m)
        return cls(np.concatenate([[0.0], K * 2.0**expo]))

    @property
    def K(self) -> float:
        return float(self.knots[-1])


def jay_squared_radial(r, k: float, params: ModelParams):
    """J_k^2 at |n| = r: -2 rho(u) rho'(u) u / k / <n>^2 with u = r/k (>= 0)."""
    r = np.asarray(r, dtype=float)
    if k <= 0.0:
        return 0.0 if r.ndim == 0 else np.zeros(r.shape)
    u = r / k
    prof = params.profile
    val = -2.0 * prof.value(u) * prof.derivative(u) * u / k
    val = val / (params.eta + 4.0 * np.pi**2 * r**2)
    if np.any(val < -_NEG_TOL):
        raise FloatingPointError("J^2 came out negative beyond tolerance")
    val = np.clip(val, 0.0, None)
    return float(val) if val.ndim == 0 else val


def jay_squared(grid: TorusGrid, k: float, params: ModelParams) -> np.ndarray:
    """J_k^2(n) on the grid frequencies."""
    if k <= 0.0:
        return np.zeros(grid.shape)
    r = np.sqrt(grid.freq_norm2)
    u = r / k
    prof = params.profile
    val = -2.0 * prof.value(u) * prof.derivative(u) * u / k / grid.bracket2(params.eta)
    if np.any(val < -_NEG_TOL):
        raise FloatingPointError("J^2 came out negative beyond tolerance")
    return np.clip(val, 0.0, None)


def jay_squared_quadrature(r: float, K: float, params: ModelParams) -> float:
    """Numeric k-quadrature of J^2 over (0, K]; equals rho_K^2(r)/<r>^2."""
    prof = params.profile
    lo = r / prof.C_rho if r > 0 else 0.0
    hi = min(K, r / prof.c_rho) if r > 0 else 0.0
    if hi <= lo:
        # support does not intersect (0, K]
        return 0.0 if (r == 0.0 or lo >= K) else _full_weight(r, params, K)
    val, _ = quad(lambda k: jay_squared_radial(r, k, params), lo, min(hi, K),
                  limit=200)
    return val


def _full_weight(r, params, K):
    rho = params.profile.value(r / K)
    return float(rho**2 / (params.eta + 4.0 * np.pi**2 * r**2))


def dealiased_wick_cube(grid: TorusGrid, coeffs: np.ndarray,
                        t: float) -> np.ndarray:
    """Spectral coefficients of :f^3: = f^3 - 3 t f with exact frequency conservation.

    The pointwise cube of a trig polynomial has degree 3x the grid Nyquist;
    evaluating it on a 4x padded grid and truncating back captures the exact
    (non-aliased) coefficients on the original frequency lattice.
    """
    m, d = grid.sites_per_axis, grid.dim
    pad = 4 * m
    idx = np.asarray(grid.freq_integers) % pad
    sel = np.ix_(*([idx] * d))
    cpad = np.zeros((pad,) * d, dtype=complex)
    cpad[sel] = coeffs
    vals = np.fft.ifftn(cpad) * pad**d
    cube = np.fft.fftn(vals**3) / pad**d
    return cube[sel] - 3.0 * t * coeffs


@dataclass(frozen=True)
class ScaleFlow:
    """One realisation of the scale flow on a knot grid.

    lollipop[j] holds the spectral field at knot j; trident is the
    accumulated cubic-flow diagram at the final knot; tadpoles[j] is the
    running contraction constant at knot j.
    """

    grid: TorusGrid
    scale_grid: ScaleGrid
    lollipop: list = field(repr=False)
    trident: np.ndarray = field(repr=False)
    tadpoles: np.ndarray = field(repr=False)

    def lollipop_field(self, j: int) -> Field:
        return fft_inverse(SpectralField(self.grid, self.lollipop[j]))


def _rho2_at(grid: TorusGrid, params: ModelParams, k: float) -> np.ndarray:
    """rho_k^2 on the grid, with the k -> 0+ limit (zero mode only) at k = 0."""
    if k == 0.0:
        out = np.zeros(grid.shape)
        out[(0,) * grid.dim] = 1.0
        return out
    return params.profile.value(np.sqrt(grid.freq_norm2) / k) ** 2


def sample_scale_flow(grid: TorusGrid, params: ModelParams,
                      scale_grid: ScaleGrid,
                      rng: np.random.Generator) -> ScaleFlow:
    knots = scale_grid.knots
    b2 = grid.bracket2(params.eta)
    nd = grid.volume
    md = grid.n_sites
    zero = (0,) * grid.dim

    coeffs = np.zeros(grid.shape, dtype=complex)
    # k-independent zero mode, seeded once (rho_k(0) = 1 for all k)
    white = fft_forward(Field(grid, rng.standard_normal(grid.shape))).coeffs
    coeffs[zero] = white[zero] * np.sqrt(md / (params.eta * nd))

    rho2_prev = _rho2_at(grid, params, knots[0])

    lollipop = [coeffs.copy()]
    tadpoles = [float((rho2_prev / b2).sum() / nd)]
    trident = np.zeros(grid.shape, dtype=complex)

    for j in range(len(knots) - 1):
        rho2_next = _rho2_at(grid, params, knots[j + 1])
        dvar = np.clip(rho2_next - rho2_prev, 0.0, None) / b2 / nd
        dvar[zero] = 0.0

        # left-point accumulation of the cubic-flow diagram over [k_j, k_{j+1}]
        cube = dealiased_wick_cube(grid, coeffs, tadpoles[-1])
        weight = np.clip(rho2_next - rho2_prev, 0.0, None) / b2
        trident = trident + weight * cube

        ghat = fft_forward(Field(grid, rng.standard_normal(grid.shape))).coeffs
        coeffs = coeffs + ghat * np.sqrt(dvar * md)
        lollipop.append(coeffs.copy())
        tadpoles.append(float((rho2_next / b2).sum() / nd))
        rho2_prev = rho2_next

    return ScaleFlow(grid=grid, scale_grid=scale_grid, lollipop=lollipop,
                     trident=trident, tadpoles=np.asarray(tadpoles))


def trident_fourier_variance(flows: list[ScaleFlow], n_index: tuple[int, ...],
                             n_batches: int = 20) -> tuple[float, float]:
    """Empirical E|F D_K(n)|^2 with batch-mean standard error."""
    if len(flows) < 1:
        raise ValueError("need a non-empty ensemble")
    vals = np.array([np.abs(f.trident[n_index]) ** 2 for f in flows])
    mean = float(vals.mean())
    nb = min(n_batches, len(vals))
    batches = np.array_split(vals, nb)
    bm = np.array([b.mean() for b in batches])
    stderr = float(bm.std(ddof=1) / np.sqrt(nb)) if nb > 1 else float("inf")
    return mean, stderr


def variance_ladder(flows: list[ScaleFlow], eta: float) -> list[tuple[float, float, float]]:
    """Rows (<n>, mean |F D_K(n)|^2 over the shell, stderr), one per |n|^2 shell."""
    grid = flows[0].grid
    n2 = grid.freq_norm2.reshape(-1)
    stack = np.stack([np.abs(f.trident.reshape(-1)) ** 2 for f in flows])
    rows = []
    for v in np.unique(n2.round(12)):
        if v == 0.0:
            continue  # no flow support at n = 0
        cols = np.isclose(n2, v)
        per_flow = stack[:, cols].mean(axis=1)
        mean = float(per_flow.mean())
        stderr = float(per_flow.std(ddof=1) / np.sqrt(len(per_flow)))
        rows.append((float(np.sqrt(eta + 4 * np.pi**2 * v)), mean, stderr))
    return rows


def fit_decay_exponent(rows: list[tuple[float, float, float]]) -> tuple[float, float]:
    """Weighted log-log fit of variance vs <n>; returns (slope, stderr)."""
    rows = [r for r in rows if r[1] > 0]
    x = np.log([r[0] for r in rows])
    y = np.log([r[1] for r in rows])
    w = np.array([(r[1] / r[2]) ** 2 if r[2] > 0 else 1.0 for r in rows])
    W = np.sum(w)
    xm, ym = np.sum(w * x) / W, np.sum(w * y) / W
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    resid = y - ym - slope * (x - xm)
    dof = max(len(x) - 2, 1)
    slope_err = np.sqrt(np.sum(w * resid**2) / dof / sxx)
    return float(slope), float(slope_err)
