"""Estimators for the headline statistics: surface-order large-deviation
rates for the magnetisation, Peierls-type all-bad-block decay, extensive
exponential penalty moments, and the spectral gap from trajectory
autocovariance.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from .observables import log_mean_exp
from .torus import ConfigurationError

RULE_OF_THREE = 3.0


@dataclasses.dataclass(frozen=True)
class RateEntry:
    side: int
    n_samples: int
    n_events: int
    log_prob: float          # log of the event probability (or its upper bound)
    rate: float              # log_prob / side^(dim-1)
    stderr: float            # binomial error propagated to the rate
    upper_bound_only: bool   # zero events: rule-of-three bound instead of estimate


@dataclasses.dataclass(frozen=True)
class RateTable:
    zeta: float
    beta: float
    dim: int
    entries: tuple[RateEntry, ...]
    consistent_pairwise_2se: bool
    inconclusive: bool


def magnetisation_event_counts(
    magnetisations: np.ndarray, zeta: float, beta: float
) -> tuple[int, int]:
    """Count the small-magnetisation event |m| < zeta sqrt(beta)."""
    m = np.asarray(magnetisations, dtype=float)
    return int(np.count_nonzero(np.abs(m) < zeta * math.sqrt(beta))), int(m.size)


def ldp_rate(
    per_side_magnetisations: "dict[int, np.ndarray]",
    zeta: float,
    beta: float,
    dim: int,
) -> RateTable:
    """Normalised log-probability of the small-magnetisation event per side.

    The surface-order prediction is that ``log P / N^(dim-1)`` approaches a
    constant along the ladder; entries with zero observed events carry a
    rule-of-three upper bound and are excluded from the consistency verdict.
    """
    if not 0.0 < zeta < 1.0:
        raise ConfigurationError(f"zeta must be in (0,1), got {zeta}")
    entries = []
    for side in sorted(per_side_magnetisations):
        k, n = magnetisation_event_counts(per_side_magnetisations[side], zeta, beta)
        norm = side ** (dim - 1)
        if k == 0:
            p_bound = RULE_OF_THREE / n
            entries.append(
                RateEntry(
                    side=side,
                    n_samples=n,
                    n_events=0,
                    log_prob=math.log(p_bound),
                    rate=math.log(p_bound) / norm,
                    stderr=math.inf,
                    upper_bound_only=True,
                )
            )
            continue
        p = k / n
        se_log = math.sqrt((1.0 - p) / k)  # delta method on log p
        entries.append(
            RateEntry(
                side=side,
                n_samples=n,
                n_events=k,
                log_prob=math.log(p),
                rate=math.log(p) / norm,
                stderr=se_log / norm,
                upper_bound_only=False,
            )
        )
    observed = [e for e in entries if not e.upper_bound_only]
    consistent = len(observed) >= 2
    for i in range(len(observed)):
        for j in range(i + 1, len(observed)):
            a, b = observed[i], observed[j]
            if abs(a.rate - b.rate) > 2.0 * math.hypot(a.stderr, b.stderr):
                consistent = False
    return RateTable(
        zeta=zeta,
        beta=beta,
        dim=dim,
        entries=tuple(entries),
        consistent_pairwise_2se=consistent,
        inconclusive=not observed,
    )


def rate_table_from_log_probs(
    per_side_log_probs: "dict[int, tuple[float, float]]",
    zeta: float,
    beta: float,
    dim: int,
) -> RateTable:
    """Rate table from externally estimated (log P, stderr) pairs per side.

    Used by the umbrella-sampling path, where the event probability comes
    from a reconstructed free-energy profile rather than event counting;
    ``n_samples``/``n_events`` are zero because no direct counts exist.
    """
    if not 0.0 < zeta < 1.0:
        raise ConfigurationError(f"zeta must be in (0,1), got {zeta}")
    entries = []
    for side in sorted(per_side_log_probs):
        log_prob, stderr = per_side_log_probs[side]
        norm = side ** (dim - 1)
        entries.append(
            RateEntry(
                side=side,
                n_samples=0,
                n_events=0,
                log_prob=log_prob,
                rate=log_prob / norm,
                stderr=stderr / norm,
                upper_bound_only=not math.isfinite(log_prob)
                or not math.isfinite(stderr),
            )
        )
    observed = [e for e in entries if not e.upper_bound_only]
    consistent = len(observed) >= 2
    for i in range(len(observed)):
        for j in range(i + 1, len(observed)):
            a, b = observed[i], observed[j]
            if abs(a.rate - b.rate) > 2.0 * math.hypot(a.stderr, b.stderr):
                consistent = False
    return RateTable(
        zeta=zeta,
        beta=beta,
        dim=dim,
        entries=tuple(entries),
        consistent_pairwise_2se=consistent,
        inconclusive=not observed,
    )


@dataclasses.dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    sizes: tuple[int, ...]
    log_probs: tuple[float, ...]
    upper_bound_only: bool


def peierls_decay(
    all_bad_indicators: "dict[int, np.ndarray]",
) -> SlopeFit:
    """Fit log P(all blocks in B bad) against |B| over a ladder of block sets.

    ``all_bad_indicators`` maps |B| to a boolean/0-1 sample array of the
    all-bad event for a block set of that size. Weighted least squares with
    binomial log-probability errors; |B| = 0 contributes the exact point
    (0, 0). Sizes with zero events are dropped (upper-bound flag set).
    """
    sizes = [0]
    logs = [0.0]
    errs = [1e-12]
    bound_only = False
    for size in sorted(all_bad_indicators):
        if size == 0:
            continue
        ind = np.asarray(all_bad_indicators[size], dtype=float)
        k, n = int(ind.sum()), ind.size
        if k == 0:
            bound_only = True
            continue
        p = k / n
        sizes.append(int(size))
        logs.append(math.log(p))
        errs.append(max(math.sqrt((1.0 - p) / k), 1e-12))
    if len(sizes) < 3:
        return SlopeFit(
            slope=math.nan,
            stderr=math.inf,
            intercept=math.nan,
            sizes=tuple(sizes),
            log_probs=tuple(logs),
            upper_bound_only=True,
        )
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(logs)
    w = 1.0 / np.asarray(errs) ** 2
    xm = np.average(x, weights=w)
    ym = np.average(y, weights=w)
    sxx = float(np.sum(w * (x - xm) ** 2))
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    stderr = math.sqrt(1.0 / sxx)
    return SlopeFit(
        slope=slope,
        stderr=stderr,
        intercept=float(intercept),
        sizes=tuple(sizes),
        log_probs=tuple(logs),
        upper_bound_only=bound_only,
    )


@dataclasses.dataclass(frozen=True)
class QMomentEstimate:
    exponent: float      # log<prod cosh> / total block count
    stderr: float
    total_blocks: int
    n_samples: int
    defined: bool


def q_moment_estimate(
    log_cosh_sums: np.ndarray,
    total_blocks: int,
    n_batches: int = 20,
) -> QMomentEstimate:
    """Per-block exponent of an exponential penalty moment.

    ``log_cosh_sums`` holds, per sample, the log of the cosh product over the
    chosen block sets; the estimate is ``log mean exp / total_blocks`` with a
    delete-one-batch jackknife error.
    """
    if total_blocks == 0:
        return QMomentEstimate(
            exponent=math.nan, stderr=math.inf, total_blocks=0,
            n_samples=len(log_cosh_sums), defined=False,
        )
    arr = np.asarray(log_cosh_sums, dtype=float)
    n = arr.size
    if n < n_batches:
        raise ConfigurationError("need at least one sample per jackknife batch")
    full = log_mean_exp(arr) / total_blocks
    batches = np.array_split(np.arange(n), n_batches)
    loo = []
    for b in batches:
        keep = np.ones(n, dtype=bool)
        keep[b] = False
        loo.append(log_mean_exp(arr[keep]) / total_blocks)
    loo = np.asarray(loo)
    k = len(batches)
    stderr = math.sqrt((k - 1) / k * float(np.sum((loo - loo.mean()) ** 2)))
    return QMomentEstimate(
        exponent=full, stderr=stderr, total_blocks=total_blocks,
        n_samples=n, defined=True,
    )


# ---------------------------------------------------------------------------
# Spectral gap


def smooth_sign(x: np.ndarray, m: float) -> np.ndarray:
    """Smooth non-decreasing odd cutoff: -1 below -m, +1 above m, quintic in
    between (C^2 at the joins)."""
    t = np.clip((np.asarray(x, dtype=float) + m) / (2.0 * m), 0.0, 1.0)
    s = t * t * t * (t * (6.0 * t - 15.0) + 10.0)  # quintic smoothstep on [0,1]
    return 2.0 * s - 1.0


def autocovariance(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocovariance estimates for lags 0..max_lag, via FFT."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    n = x.size
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    return acov


def integrated_autocorrelation_time(series: np.ndarray, c: float = 6.0) -> float:
    """Self-consistent window estimate (Sokal): tau = 1/2 + sum rho(k)."""
    x = np.asarray(series, dtype=float)
    n = x.size
    acov = autocovariance(x, min(n - 2, n // 2))
    if acov[0] <= 0:
        return 1.0
    rho = acov / acov[0]
    tau = 0.5
    for k in range(1, rho.size):
        tau += rho[k]
        if k >= c * tau:
            break
    return max(tau, 0.5)


@dataclasses.dataclass(frozen=True)
class GapEstimate:
    rate: float              # fitted decay rate of the autocovariance (per unit time)
    stderr: float
    tau_int: float           # integrated autocorrelation time in steps
    fit_lags: tuple[int, int]
    inconclusive: bool


def spectral_gap_estimate(
    m_trajectory: np.ndarray,
    dt: float,
    m_threshold: float,
    n_batches: int = 20,
    fit_window: tuple[float, float] = (1.0, 5.0),
) -> GapEstimate:
    """Relaxation rate of the smoothed-sign magnetisation observable.

    Applies the odd smooth cutoff at ``m_threshold`` to the trajectory, fits
    a line to the log-autocovariance over lags ``[tau, 5 tau]`` (tau = the
    integrated autocorrelation time), and returns minus the slope per unit
    physical time, with a batch-bootstrap standard error.
    """
    x = smooth_sign(np.asarray(m_trajectory, dtype=float), m_threshold)
    n = x.size
    tau = integrated_autocorrelation_time(x)
    lo = max(1, int(round(fit_window[0] * tau)))
    hi = max(lo + 4, int(round(fit_window[1] * tau)))
    if hi >= n // 2:
        raise ConfigurationError(
            f"trajectory too short: need lags up to {hi}, have {n} points"
        )

    def fit_rate(series: np.ndarray) -> float:
        acov = autocovariance(series, hi)
        window = acov[lo : hi + 1]
        nonpos = np.flatnonzero(window <= 0.0)
        if nonpos.size:  # noise crossed zero: truncate the fit window there
            if nonpos[0] < 5:
                return math.nan
            window = window[: nonpos[0]]
        lags = np.arange(lo, lo + window.size, dtype=float)
        logs = np.log(window)
        # the absolute noise on the autocovariance is roughly lag-independent,
        # so the noise on its log scales like 1/acov: weight by acov^2
        w = window**2
        xm = np.average(lags, weights=w)
        ym = np.average(logs, weights=w)
        slope = float(np.sum(w * (lags - xm) * (logs - ym)) / np.sum(w * (lags - xm) ** 2))
        return -slope / dt

    full = fit_rate(x)
    segments = np.array_split(x, n_batches)
    rng = np.random.default_rng(20260826)  # fixed: estimates must be deterministic
    boots = []
    for _ in range(200):
        picks = rng.integers(0, len(segments), len(segments))
        est = [fit_rate(segments[i]) for i in picks if segments[i].size > 2 * hi]
        est = [e for e in est if not math.isnan(e)]
        if est:
            boots.append(float(np.mean(est)))
    inconclusive = math.isnan(full) or len(boots) < 50
    stderr = float(np.std(boots, ddof=1)) if len(boots) > 1 else math.inf
    return GapEstimate(
        rate=full,
        stderr=stderr,
        tau_int=tau,
        fit_lags=(lo, hi),
        inconclusive=bool(inconclusive),
    )
