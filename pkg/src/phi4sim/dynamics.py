"""Stochastic integrators sampling the renormalised double-well field measure.

Two schemes are provided:

* ``lattice`` — explicit Euler--Maruyama for the site-indexed SDE system
  driven by the discrete Laplacian, with cell-indicator white-noise
  discretisation (variance ``eps^-dim`` per site per unit time).
* ``galerkin`` — exponential Euler in Fourier space: the linear semigroup
  ``exp(-dt * bracket2)`` is applied exactly per mode and the noise increment
  carries the exact Ornstein--Uhlenbeck variance, so the scheme is stable for
  arbitrarily stiff modes.

Randomness is counter-based: every step builds a fresh Philox generator keyed
by ``(seed, step)``, which makes trajectories bit-exactly resumable from a
checkpoint without replaying earlier steps.
"""

from __future__ import annotations

import dataclasses
import math
import struct
from typing import Iterator, Sequence

import numpy as np

from .gff import ModelParams, gamma, lattice_mass_counterterm, tadpole
from .torus import (
    ConfigurationError,
    Field,
    SpectralField,
    TorusGrid,
    fft_forward,
    fft_inverse,
)

STABILITY_SAFETY = 0.8

CHECKPOINT_MAGIC = b"PHI4"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIBIIdddBQQ")
_SCHEME_CODES = {"lattice": 0, "galerkin": 1}
_SCHEME_NAMES = {v: k for k, v in _SCHEME_CODES.items()}


class DivergedError(RuntimeError):
    """A trajectory produced a non-finite field value."""

    def __init__(self, step: int, checkpoint_path: str | None = None):
        msg = f"trajectory diverged at step {step}"
        if checkpoint_path is not None:
            msg += f" (last checkpoint: {checkpoint_path})"
        super().__init__(msg)
        self.step = step
        self.checkpoint_path = checkpoint_path


def stability_limit(grid: TorusGrid) -> float:
    """Largest admissible dt for the explicit lattice scheme."""
    return grid.spacing**2 / (2.0 * grid.dim) * STABILITY_SAFETY


@dataclasses.dataclass(frozen=True)
class MagnetisationBias:
    """Quadratic umbrella potential on the mean field, ``kappa/2 (m - centre)^2``.

    Added to the action, it tilts the invariant measure by
    ``exp(-kappa/2 (m - centre)^2)`` and contributes the spatially constant
    drift ``-kappa (m - centre) / N^dim`` per site. Under a strong bias the
    magnetisation concentrates around ``centre`` with variance ``1/kappa``.
    """

    kappa: float
    centre: float

    def __post_init__(self):
        if not (self.kappa > 0.0 and math.isfinite(self.kappa)):
            raise ConfigurationError(f"kappa must be positive, got {self.kappa}")
        if not math.isfinite(self.centre):
            raise ConfigurationError("bias centre must be finite")

    def site_force(self, grid: TorusGrid, mean_value: float) -> float:
        return -self.kappa * (mean_value - self.centre) / grid.volume

    def log_weight(self, mean_value: float) -> float:
        """log of the reweighting factor back to the unbiased measure."""
        return 0.5 * self.kappa * (mean_value - self.centre) ** 2


@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce a trajectory.

    ``nonlinearity=False`` drops the cubic drift and its counterterms, leaving
    pure linear (Gaussian) dynamics; ``linear_override``, when set, replaces
    the linear drift coefficient (the ``4 + mass counterterm`` term for the
    lattice scheme, the filtered linear coefficient for the spectral scheme),
    which is how the Ornstein--Uhlenbeck reference tests dial the drift to
    exactly ``laplacian - eta``. ``bias`` optionally adds an umbrella
    potential on the magnetisation (off by default).
    """

    grid: TorusGrid
    params: ModelParams
    scheme: str
    dt: float
    n_steps: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    nonlinearity: bool = True
    linear_override: float | None = None
    bias: MagnetisationBias | None = None

    def __post_init__(self):
        if self.scheme not in _SCHEME_CODES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive and finite, got {self.dt}")
        if self.scheme == "lattice":
            limit = stability_limit(self.grid)
            if self.dt >= limit:
                raise ConfigurationError(
                    f"dt={self.dt} violates the explicit-scheme stability bound "
                    f"{limit} = eps^2/(2 dim) * {STABILITY_SAFETY}"
                )
        if self.scheme == "galerkin" and math.isfinite(self.params.K):
            if self.params.K > self.grid.nyquist:
                raise ConfigurationError(
                    f"cutoff K={self.params.K} exceeds the grid Nyquist "
                    f"frequency {self.grid.nyquist}"
                )
        if self.n_steps < 0 or self.burn_in < 0:
            raise ConfigurationError("n_steps and burn_in must be non-negative")
        if self.thin < 1:
            raise ConfigurationError(f"thin must be >= 1, got {self.thin}")
        if not (0 <= self.seed < 2**64):
            raise ConfigurationError("seed must fit in 64 bits")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every must be non-negative")


@dataclasses.dataclass(frozen=True)
class TrajectoryRecord:
    step: int
    time: float
    magnetisation: float
    energy_density: float
    finite: bool
    checkpoint_id: str | None = None

    def __post_init__(self):
        if self.finite and not (
            math.isfinite(self.time)
            and math.isfinite(self.magnetisation)
            and math.isfinite(self.energy_density)
        ):
            raise ValueError("record marked finite but carries non-finite entries")


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Counter-based generator for one integration step.

    The 256-bit Philox counter is offset by ``step << 64`` so consecutive
    steps draw from disjoint counter blocks regardless of how many variates a
    step consumes.
    """
    return np.random.Generator(np.random.Philox(key=seed, counter=step << 64))


def discrete_laplacian(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Nearest-neighbour Laplacian with periodic wrap, spacing ``eps``."""
    out = -2.0 * grid.dim * values
    for axis in range(grid.dim):
        out = out + np.roll(values, 1, axis=axis) + np.roll(values, -1, axis=axis)
    return out / grid.spacing**2


def _lattice_linear_coefficient(config: SimConfig) -> float:
    if config.linear_override is not None:
        return config.linear_override
    p = config.params
    return 4.0 + lattice_mass_counterterm(config.grid, p)


def step_lattice(
    field: Field, config: SimConfig, rng: np.random.Generator
) -> Field:
    """One Euler--Maruyama step of the lattice Langevin system."""
    grid = config.grid
    phi = field.values
    drift = discrete_laplacian(grid, phi) + _lattice_linear_coefficient(config) * phi
    if config.nonlinearity:
        drift = drift - (4.0 / config.params.beta) * phi**3
    if config.bias is not None:
        drift = drift + config.bias.site_force(grid, float(phi.mean()))
    noise = rng.standard_normal(grid.shape)
    new = phi + config.dt * drift + math.sqrt(2.0 * config.dt / grid.spacing**grid.dim) * noise
    if not np.all(np.isfinite(new)):
        raise DivergedError(step=-1)
    return Field(grid=grid, values=new)


def _galerkin_linear_coefficient(config: SimConfig) -> float:
    if config.linear_override is not None:
        return config.linear_override
    p = config.params
    t = tadpole(config.grid, p)
    return 4.0 + p.eta + (12.0 / p.beta) * t + (2.0 / p.beta**2) * gamma(config.grid, p)


def step_galerkin(
    field: Field, config: SimConfig, rng: np.random.Generator
) -> Field:
    """One exponential-Euler step of the spectral (Fourier-cutoff) SPDE.

    The drift beyond the exact linear flow is the cutoff-filtered cubic plus
    the filtered linear counterterm, evaluated in physical space on the
    filtered field and re-filtered. The noise increment per mode carries the
    exact stationary-consistent variance ``(1 - exp(-2 dt <n>^2)) / <n>^2``
    in unnormalised pairing, i.e. divided by ``N^dim`` per coefficient.
    """
    grid = config.grid
    p = config.params
    b2 = grid.bracket2(p.eta)
    rho = p.rho(grid)
    coeffs = fft_forward(field).coeffs

    drift_coeffs = np.zeros_like(coeffs)
    if config.nonlinearity or config.linear_override is not None:
        filtered = rho * coeffs
        lin = _galerkin_linear_coefficient(config)
        drift_coeffs = lin * rho * filtered
        if config.nonlinearity:
            phys = fft_inverse(SpectralField(grid=grid, coeffs=filtered)).values
            cubic = fft_forward(Field(grid=grid, values=phys**3)).coeffs
            drift_coeffs = drift_coeffs - (4.0 / p.beta) * rho * cubic
    if config.bias is not None:
        zero = (0,) * grid.dim
        mean_value = float(coeffs[zero].real)
        drift_coeffs[zero] += config.bias.site_force(grid, mean_value)

    decay = np.exp(-config.dt * b2)
    # phi_1(z) = (1 - e^-z)/z applied to the frozen drift keeps the step
    # exact for constant drift and O(dt^2)-consistent in general.
    phi1_dt = (1.0 - decay) / b2

    white = rng.standard_normal(grid.shape)
    noise_scale = np.sqrt((1.0 - decay**2) / b2) * grid.spacing ** (-grid.dim / 2.0)
    noise_coeffs = fft_forward(Field(grid=grid, values=white)).coeffs * noise_scale

    new_coeffs = decay * coeffs + phi1_dt * drift_coeffs + noise_coeffs
    if not np.all(np.isfinite(new_coeffs)):
        raise DivergedError(step=-1)
    return fft_inverse(SpectralField(grid=grid, coeffs=new_coeffs))


_STEPPERS = {"lattice": step_lattice, "galerkin": step_galerkin}


def energy_density(grid: TorusGrid, values: np.ndarray, beta: float) -> float:
    """Mean of the local action density: gradient energy plus double-well."""
    grad2 = np.zeros_like(values)
    for axis in range(grid.dim):
        diff = (np.roll(values, -1, axis=axis) - values) / grid.spacing
        grad2 += diff**2
    well = (values**2 - beta) ** 2 / beta
    return float(np.mean(0.5 * grad2 + well))


# ---------------------------------------------------------------------------
# Checkpoints


def write_checkpoint(path: str, config: SimConfig, field: Field, step: int) -> None:
    grid = config.grid
    p = config.params
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        grid.dim,
        grid.side,
        grid.eps_inv,
        p.beta,
        p.eta,
        p.K,
        _SCHEME_CODES[config.scheme],
        config.seed,
        step,
    )
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


@dataclasses.dataclass(frozen=True)
class Checkpoint:
    grid: TorusGrid
    beta: float
    eta: float
    K: float
    scheme: str
    seed: int
    step: int
    field: Field


def read_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ConfigurationError(f"checkpoint {path!r} is truncated")
    magic, version, dim, side, eps_inv, beta, eta, K, scheme_code, seed, step = (
        _HEADER.unpack_from(raw)
    )
    if magic != CHECKPOINT_MAGIC:
        raise ConfigurationError(f"not a checkpoint file: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version}")
    if scheme_code not in _SCHEME_NAMES:
        raise ConfigurationError(f"unknown scheme code {scheme_code}")
    grid = TorusGrid(dim=dim, side=side, eps_inv=eps_inv)
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if values.size != grid.n_sites:
        raise ConfigurationError(
            f"checkpoint field has {values.size} values, grid needs {grid.n_sites}"
        )
    field = Field(grid=grid, values=values.reshape(grid.shape).copy())
    return Checkpoint(
        grid=grid,
        beta=beta,
        eta=eta,
        K=K,
        scheme=_SCHEME_NAMES[scheme_code],
        seed=seed,
        step=step,
        field=field,
    )


# ---------------------------------------------------------------------------
# Trajectory driver


@dataclasses.dataclass(frozen=True)
class RunResult:
    records: tuple[TrajectoryRecord, ...]
    emitted: tuple[Field, ...]
    final_field: Field
    final_step: int
    checkpoint_paths: tuple[str, ...]


def run(
    config: SimConfig,
    initial: Field | None = None,
    start_step: int = 0,
    checkpoint_dir: str | None = None,
    keep_fields: bool = True,
) -> RunResult:
    """Integrate ``n_steps`` steps, emitting every ``thin``-th post-burn-in state.

    Deterministic given ``config.seed``: step ``s`` always consumes Philox
    counter block ``s``, so a run resumed from a checkpoint at ``start_step``
    reproduces the uninterrupted trajectory bit for bit.
    """
    grid = config.grid
    stepper = _STEPPERS[config.scheme]
    field = initial if initial is not None else Field(grid=grid, values=np.zeros(grid.shape))
    if field.grid != grid:
        raise ConfigurationError("initial field grid does not match config grid")

    records: list[TrajectoryRecord] = []
    emitted: list[Field] = []
    checkpoint_paths: list[str] = []
    last_checkpoint: str | None = None

    step = start_step
    end = config.n_steps
    while step < end:
        try:
            field = stepper(field, config, step_rng(config.seed, step))
        except DivergedError:
            raise DivergedError(step=step, checkpoint_path=last_checkpoint) from None
        step += 1
        if checkpoint_dir is not None and config.checkpoint_every > 0 and (
            step % config.checkpoint_every == 0
        ):
            path = f"{checkpoint_dir}/ckpt_{step:012d}.phi4"
            write_checkpoint(path, config, field, step)
            checkpoint_paths.append(path)
            last_checkpoint = path
        if step > config.burn_in and (step - config.burn_in) % config.thin == 0:
            m = float(np.mean(field.values))
            e = energy_density(grid, field.values, config.params.beta)
            records.append(
                TrajectoryRecord(
                    step=step,
                    time=step * config.dt,
                    magnetisation=m,
                    energy_density=e,
                    finite=bool(np.isfinite(m) and np.isfinite(e)),
                    checkpoint_id=last_checkpoint,
                )
            )
            if keep_fields:
                emitted.append(field)

    return RunResult(
        records=tuple(records),
        emitted=tuple(emitted),
        final_field=field,
        final_step=step,
        checkpoint_paths=tuple(checkpoint_paths),
    )
