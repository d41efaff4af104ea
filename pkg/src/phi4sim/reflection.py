"""Torus hyperplane reflections, reflection-positivity Gram tests, and the
empirical chessboard inequality check.

Sites are cell-centred at ``(k + 1/2) eps``, so reflecting about an integer
offset permutes sites exactly and nothing sits on the mirror plane. The
chessboard check works with per-block observables that are invariant under
the in-block site permutations that face reflections induce (the ``exp(Q)``
family is), for which transporting an observable to another block along any
chain of face reflections just evaluates it at the target block — the
transport path-independence is asserted, not assumed.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Sequence

import numpy as np

from .observables import BlockField
from .torus import BlockPartition, ConfigurationError, Field, TorusGrid


@dataclasses.dataclass(frozen=True)
class Hyperplane:
    """Mirror plane orthogonal to ``axis`` through integer offset ``offset``."""

    axis: int
    offset: int

    def validate(self, grid: TorusGrid) -> None:
        if not 0 <= self.axis < grid.dim:
            raise ConfigurationError(f"axis {self.axis} out of range for dim {grid.dim}")
        if not 0 <= self.offset < grid.side:
            raise ConfigurationError(
                f"offset {self.offset} must lie in 0..{grid.side - 1}"
            )
        if grid.side % 2 != 0:
            raise ConfigurationError("reflections need an even torus side")

    def site_index_map(self, grid: TorusGrid) -> np.ndarray:
        """Per-axis index permutation: k -> 2 a/eps - 1 - k (mod M)."""
        m = grid.sites_per_axis
        k = np.arange(m)
        return (2 * self.offset * grid.eps_inv - 1 - k) % m

    def block_index_map(self, partition: BlockPartition) -> np.ndarray:
        """Permutation of block indices under the reflection."""
        n = partition.side
        corners = partition.corners.copy()
        corners[:, self.axis] = (2 * self.offset - 1 - corners[:, self.axis]) % n
        return np.array([partition.block_index(c) for c in corners])


def reflect(field: Field, hp: Hyperplane) -> Field:
    """Pointwise reflection of the field in the hyperplane (an involution)."""
    grid = field.grid
    hp.validate(grid)
    idx = hp.site_index_map(grid)
    values = np.take(field.values, idx, axis=hp.axis)
    return Field(grid=grid, values=values)


def half_torus_mask(grid: TorusGrid, hp: Hyperplane) -> np.ndarray:
    """Site mask of the open positive half (a, a + N/2) along the axis."""
    hp.validate(grid)
    coords = grid.site_coords[..., hp.axis]
    rel = (coords - hp.offset) % grid.side
    return rel < grid.side / 2.0


@dataclasses.dataclass(frozen=True)
class GramReport:
    gram: np.ndarray
    min_eigenvalue: float
    stderr: float
    psd_within_3_stderr: bool
    ill_conditioned: bool
    n_samples: int


def rp_gram_test(
    fields: Sequence[Field],
    family: Sequence[Callable[[Field], float]],
    hp: Hyperplane,
    n_batches: int = 20,
    condition_limit: float = 1e8,
) -> GramReport:
    """Monte Carlo Gram matrix G[j,k] = <F_j(phi) F_k(reflected phi)>.

    The smallest eigenvalue of the symmetrised Gram estimate is reported with
    a delete-one-batch jackknife error; for a reflection-positive measure it
    must not be significantly negative.
    """
    n = len(fields)
    m = len(family)
    if n < n_batches:
        raise ConfigurationError("need at least one sample per jackknife batch")
    vals = np.empty((n, m))
    refl_vals = np.empty((n, m))
    for s, f in enumerate(fields):
        rf = reflect(f, hp)
        for j, obs in enumerate(family):
            vals[s, j] = obs(f)
            refl_vals[s, j] = obs(rf)
    products = np.einsum("sj,sk->sjk", vals, refl_vals)
    gram = 0.5 * (products.mean(axis=0) + products.mean(axis=0).T)

    def min_eig(p: np.ndarray) -> float:
        g = p.mean(axis=0)
        return float(np.linalg.eigvalsh(0.5 * (g + g.T))[0])

    full = min_eig(products)
    batches = np.array_split(np.arange(n), n_batches)
    loo = []
    for b in batches:
        keep = np.ones(n, dtype=bool)
        keep[b] = False
        loo.append(min_eig(products[keep]))
    loo = np.asarray(loo)
    k = len(batches)
    stderr = math.sqrt((k - 1) / k * float(np.sum((loo - loo.mean()) ** 2)))
    eigs = np.linalg.eigvalsh(gram)
    ill = bool(eigs[-1] > condition_limit * max(abs(eigs[0]), 1e-300))
    return GramReport(
        gram=gram,
        min_eigenvalue=full,
        stderr=stderr,
        psd_within_3_stderr=bool(full >= -3.0 * stderr),
        ill_conditioned=ill,
        n_samples=n,
    )


# ---------------------------------------------------------------------------
# Chessboard


def reflect_block_through_face(
    partition: BlockPartition, block: int, axis: int, positive: bool
) -> int:
    """Image of a block under reflection through one of its own faces."""
    corner = partition.corners[block].copy()
    n = partition.side
    # reflecting through the face at corner+1 (positive) or corner (negative)
    a = (corner[axis] + 1) if positive else corner[axis]
    corner[axis] = (2 * a - 1 - corner[axis]) % n
    return partition.block_index(corner)


def transport_path(
    partition: BlockPartition, src: int, dst: int, axis_order: Sequence[int]
) -> list[int]:
    """Chain of face-reflection images carrying ``src`` onto ``dst``.

    Moves one block per reflection, axis by axis in the given order; the
    returned list starts at ``src`` and ends at ``dst``.
    """
    path = [src]
    cur = src
    n = partition.side
    for axis in axis_order:
        while partition.corners[cur][axis] != partition.corners[dst][axis]:
            diff = (partition.corners[dst][axis] - partition.corners[cur][axis]) % n
            positive = diff <= n // 2
            cur = reflect_block_through_face(partition, cur, axis, positive)
            path.append(cur)
            if len(path) > partition.n_blocks * partition.grid.dim:
                raise RuntimeError("transport path failed to terminate")
    return path


def assert_transport_path_independent(
    bf: BlockField,
    log_factor_values: np.ndarray,
    src: int,
    dst: int,
    tol: float = 1e-10,
) -> None:
    """Check the transported observable value is reflection-path independent.

    For the in-block permutation-invariant family, transporting along any
    path must land on the plain evaluation at the destination block; two
    different axis orders are compared.
    """
    part = bf.partition
    dim = part.grid.dim
    p1 = transport_path(part, src, dst, list(range(dim)))
    p2 = transport_path(part, src, dst, list(reversed(range(dim))))
    if p1[-1] != dst or p2[-1] != dst:
        raise RuntimeError("transport paths did not reach the destination block")
    v1 = log_factor_values[p1[-1]]
    v2 = log_factor_values[p2[-1]]
    if abs(v1 - v2) > tol:
        raise RuntimeError(
            f"transported observable differs between reflection paths: {v1} vs {v2}"
        )


@dataclasses.dataclass(frozen=True)
class ChessboardReport:
    log_lhs: float
    log_rhs: float
    margin: float          # log LHS - log RHS; the inequality predicts <= 0
    stderr: float
    n_samples: int
    inconclusive: bool


def chessboard_check(
    block_fields: Sequence[BlockField],
    log_factor: Callable[[BlockField], np.ndarray],
    block_set: Sequence[int],
    n_batches: int = 20,
) -> ChessboardReport:
    """Empirical two-sided estimate of the chessboard inequality.

    ``log_factor`` maps a block field to the per-block log observable values.
    LHS is the mean of the product over ``block_set``; RHS is the mean of the
    product over *all* blocks, raised to ``|block_set| / n_blocks`` per the
    reflection-multiplication structure. Both sides and the margin are
    estimated per batch in log space; the margin's batch stderr is reported.
    """
    samples = list(block_fields)
    n = len(samples)
    if n < n_batches:
        raise ConfigurationError("need at least one sample per batch")
    part = samples[0].partition
    if part.side % 4 != 0:
        raise ConfigurationError("chessboard estimates need a torus side in 4N")
    block_set = np.asarray(block_set, dtype=int)

    log_vals = np.stack([log_factor(bf) for bf in samples])  # (n, blocks)
    assert_transport_path_independent(
        samples[0], log_vals[0], int(block_set[0]), (int(block_set[0]) + 1) % part.n_blocks
    )
    lhs_terms = log_vals[:, block_set].sum(axis=1)
    rhs_terms = log_vals.sum(axis=1)

    def log_mean(x: np.ndarray) -> float:
        m = float(np.max(x))
        return m + math.log(float(np.mean(np.exp(x - m))))

    power = block_set.size / part.n_blocks
    log_lhs = log_mean(lhs_terms)
    log_rhs = power * log_mean(rhs_terms)

    batches = np.array_split(np.arange(n), n_batches)
    margins = np.array(
        [log_mean(lhs_terms[b]) - power * log_mean(rhs_terms[b]) for b in batches]
    )
    stderr = float(np.std(margins, ddof=1) / math.sqrt(len(batches)))
    inconclusive = bool(
        not np.all(np.isfinite(margins))
        or not math.isfinite(log_lhs)
        or not math.isfinite(log_rhs)
    )
    return ChessboardReport(
        log_lhs=log_lhs,
        log_rhs=log_rhs,
        margin=log_lhs - log_rhs,
        stderr=stderr,
        n_samples=n,
        inconclusive=bool(inconclusive),
    )
