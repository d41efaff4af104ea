"""Umbrella sampling of the magnetisation: biased window runs along a ladder
of centres, free-energy reconstruction by self-consistent histogram
reweighting, and rare-event probabilities with jackknife errors.

The probability of ``|m| < t`` at low temperature is exponentially small in
the torus side and unobservable by direct sampling; a ladder of quadratic
biases walks the magnetisation from one well to the other, and the
reweighting equations stitch the window histograms into the unbiased log
density, solved in log space so arbitrarily small probabilities stay finite.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import logsumexp

from .dynamics import MagnetisationBias, SimConfig, run
from .torus import ConfigurationError, Field

__all__ = [
    "WindowSample",
    "FreeEnergyProfile",
    "run_umbrella_ladder",
    "reconstruct_profile",
    "log_event_probability",
]


@dataclasses.dataclass(frozen=True)
class WindowSample:
    """Magnetisation series recorded under one umbrella bias."""

    bias: MagnetisationBias
    magnetisations: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.magnetisations, dtype=float)
        if m.ndim != 1 or m.size == 0:
            raise ConfigurationError("window needs a non-empty 1D series")
        if not np.all(np.isfinite(m)):
            raise ConfigurationError("window magnetisations must be finite")
        object.__setattr__(self, "magnetisations", m)


@dataclasses.dataclass(frozen=True)
class FreeEnergyProfile:
    """Unbiased log density of the magnetisation on a bin grid.

    ``log_density`` is normalised to logsumexp = 0 over occupied bins;
    unoccupied bins carry -inf.
    """

    bin_edges: np.ndarray
    log_density: np.ndarray
    n_iterations: int
    converged: bool
    log_window_norms: np.ndarray

    @property
    def bin_centres(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def run_umbrella_ladder(
    base: SimConfig,
    centres: "list[float] | np.ndarray",
    kappa: float,
    initial: Field | None = None,
) -> list[WindowSample]:
    """Run one biased trajectory per centre, warm-starting each window from
    the previous window's final state so the walk down the ladder stays
    equilibrated. ``base`` supplies everything but the bias; its seed is
    offset per window so windows are independent given the start states.
    """
    windows: list[WindowSample] = []
    field = initial
    for i, centre in enumerate(centres):
        bias = MagnetisationBias(kappa=kappa, centre=float(centre))
        config = dataclasses.replace(base, bias=bias, seed=base.seed + i)
        if field is None:
            field = Field(
                base.grid, np.full(base.grid.shape, float(centre))
            )
        result = run(config, initial=field, keep_fields=False)
        field = result.final_field
        mags = np.array([r.magnetisation for r in result.records])
        windows.append(WindowSample(bias=bias, magnetisations=mags))
    return windows


def _window_counts(
    windows: "list[WindowSample]", bin_edges: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    counts = np.stack(
        [np.histogram(w.magnetisations, bins=bin_edges)[0] for w in windows]
    ).astype(float)
    totals = counts.sum(axis=1)
    return counts, totals


def reconstruct_profile(
    windows: "list[WindowSample]",
    bin_edges: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 200_000,
    initial_log_f: np.ndarray | None = None,
) -> FreeEnergyProfile:
    """Self-consistent histogram reweighting in log space.

    Iterates the coupled equations for the unbiased bin log-densities and the
    per-window log normalisations until the latter are stable to ``tol``.
    ``initial_log_f`` warm-starts the window normalisations (e.g. from a
    previous solve of a near-identical problem), which cuts the iteration
    count by orders of magnitude for jackknife re-solves.
    """
    if len(windows) == 0:
        raise ConfigurationError("need at least one window")
    bin_edges = np.asarray(bin_edges, dtype=float)
    centres = 0.5 * (bin_edges[:-1] + bin_edges[1:])
    counts, totals = _window_counts(windows, bin_edges)
    covered = counts.sum(axis=0) > 0
    if not np.any(covered):
        raise ConfigurationError("no samples fall inside the bin range")

    # -log of each window's bias factor evaluated at the bin centres
    neg_u = -np.stack(
        [0.5 * w.bias.kappa * (centres - w.bias.centre) ** 2 for w in windows]
    )
    log_counts_tot = np.where(covered, np.log(np.maximum(counts.sum(axis=0), 1e-300)), -np.inf)
    log_totals = np.log(totals)

    if initial_log_f is not None:
        log_f = np.asarray(initial_log_f, dtype=float).copy()
        if log_f.shape != (len(windows),):
            raise ConfigurationError("initial_log_f needs one entry per window")
    else:
        log_f = np.zeros(len(windows))  # -log Z_w of each biased window
    log_p = np.where(covered, log_counts_tot - logsumexp(
        (log_totals + log_f)[:, None] + neg_u, axis=0
    ), -np.inf)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_f = -logsumexp(log_p[None, :] + neg_u, axis=1)
        denom = logsumexp((log_totals + new_f)[:, None] + neg_u, axis=0)
        new_p = np.where(covered, log_counts_tot - denom, -np.inf)
        new_p = new_p - logsumexp(new_p[covered])
        shift = float(np.max(np.abs(new_f - log_f)))
        log_f, log_p = new_f, new_p
        if shift < tol:
            converged = True
            break
    return FreeEnergyProfile(
        bin_edges=bin_edges,
        log_density=log_p,
        n_iterations=it,
        converged=converged,
        log_window_norms=log_f,
    )


def _log_prob_below(profile: FreeEnergyProfile, threshold: float) -> float:
    centres = profile.bin_centres
    mask = np.abs(centres) < threshold
    sel = profile.log_density[mask]
    sel = sel[np.isfinite(sel)]
    if sel.size == 0:
        return -math.inf
    return float(logsumexp(sel))


def log_event_probability(
    windows: "list[WindowSample]",
    threshold: float,
    bin_edges: np.ndarray,
    n_batches: int = 10,
) -> tuple[float, float]:
    """log P(|m| < threshold) with a delete-one-time-batch jackknife error.

    Each window's series is cut into ``n_batches`` contiguous batches; the
    whole reconstruction is redone with batch j removed from every window,
    which propagates the correlated window noise into the error estimate.
    """
    if threshold <= 0.0:
        raise ConfigurationError("threshold must be positive")
    profile = reconstruct_profile(windows, bin_edges)
    full = _log_prob_below(profile, threshold)
    if not math.isfinite(full):
        return -math.inf, math.inf
    warm = profile.log_window_norms
    loo = []
    for j in range(n_batches):
        reduced = []
        for w in windows:
            batches = np.array_split(w.magnetisations, n_batches)
            kept = np.concatenate(
                [b for i, b in enumerate(batches) if i != j]
            )
            reduced.append(WindowSample(bias=w.bias, magnetisations=kept))
        loo.append(
            _log_prob_below(
                reconstruct_profile(reduced, bin_edges, initial_log_f=warm),
                threshold,
            )
        )
    loo = np.asarray(loo)
    if not np.all(np.isfinite(loo)):
        return full, math.inf
    k = n_batches
    stderr = math.sqrt((k - 1) / k * float(np.sum((loo - loo.mean()) ** 2)))
    return full, stderr
