"""Phase labels, bad-block classification, defect extraction and erasure.

Blocks carry a ternary *valued* label from the block mean (within the delta
window of +sqrt(beta), of -sqrt(beta), or neither), a spin ``sigma`` that is
nonzero only where the whole *-ball agrees in sign, and — on the bad set — a
binary kind: *frustrated* (a neutral block in the *-ball) or *interface*
(signs disagree across a nearest-neighbour pair in the *-ball). Defects are
*-connected components of the inner boundary of the complement of the
minus-good region; small ones get an interior/exterior decomposition by
flood fill and can be erased, producing a two-valued spin field whose
boundary faces feed the surface-order estimates.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque

import numpy as np

from .observables import BlockField, q1_all, q2_all
from .torus import BlockPartition, ConfigurationError

PLUS = 1
MINUS = -1
NEUTRAL = 0

GOOD = 0
FRUSTRATED = 1
INTERFACE = 2


class InvariantViolation(RuntimeError):
    """A structural property the construction guarantees failed to hold."""


def penalty_rate(delta: float) -> float:
    """Exponential small-ball rate for the bad-set bounds: min(delta/2, 2-2delta)."""
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must be in (0,1), got {delta}")
    return min(delta / 2.0, 2.0 - 2.0 * delta)


def classify_blocks(bf: BlockField, beta: float, delta: float) -> np.ndarray:
    """Ternary valued label per block; ties at the window edge are Neutral."""
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must be in (0,1), got {delta}")
    root = math.sqrt(beta)
    phi = bf.phi_avg
    valued = np.zeros(phi.shape, dtype=np.int8)
    valued[np.abs(phi - root) < root * delta] = PLUS
    valued[np.abs(phi + root) < root * delta] = MINUS
    return valued


@dataclasses.dataclass(frozen=True)
class PhaseLabel:
    partition: BlockPartition
    beta: float
    valued: np.ndarray       # int8 per block: +1 / -1 / 0
    sigma_sign: np.ndarray   # int8 per block: +1 / -1 / 0
    bad_kind: np.ndarray     # int8 per block: GOOD / FRUSTRATED / INTERFACE

    @property
    def sigma(self) -> np.ndarray:
        return self.sigma_sign * math.sqrt(self.beta)

    @property
    def bad_blocks(self) -> np.ndarray:
        return np.flatnonzero(self.sigma_sign == 0)

    @property
    def minus_good(self) -> np.ndarray:
        return np.flatnonzero(self.sigma_sign == MINUS)


def phase_label(
    valued: np.ndarray, partition: BlockPartition, beta: float
) -> PhaseLabel:
    """Assign spins: +/-sqrt(beta) where the whole *-ball agrees, 0 otherwise."""
    ball_vals = valued[partition.star_balls]  # (n_blocks, ball)
    plus_good = np.all(ball_vals == PLUS, axis=1)
    minus_good = np.all(ball_vals == MINUS, axis=1)
    if np.any(plus_good & minus_good):
        raise InvariantViolation("a block cannot be plus-good and minus-good")
    sigma_sign = np.zeros(valued.shape, dtype=np.int8)
    sigma_sign[plus_good] = PLUS
    sigma_sign[minus_good] = MINUS
    bad_kind = _partition_bad(valued, partition, sigma_sign)
    return PhaseLabel(
        partition=partition,
        beta=beta,
        valued=valued.astype(np.int8),
        sigma_sign=sigma_sign,
        bad_kind=bad_kind,
    )


def _partition_bad(
    valued: np.ndarray, partition: BlockPartition, sigma_sign: np.ndarray
) -> np.ndarray:
    bad = sigma_sign == 0
    ball_vals = valued[partition.star_balls]
    has_neutral = np.any(ball_vals == NEUTRAL, axis=1)
    kind = np.zeros(valued.shape, dtype=np.int8)
    kind[bad & has_neutral] = FRUSTRATED
    interface = np.zeros(valued.shape, dtype=bool)
    pairs_by_block = partition.star_nn_pairs
    for b in np.flatnonzero(bad & ~has_neutral):
        pairs = pairs_by_block[b]
        interface[b] = bool(
            np.any(valued[pairs[:, 0]] * valued[pairs[:, 1]] == -1)
        )
    kind[bad & ~has_neutral & interface] = INTERFACE
    unclassified = bad & (kind == GOOD)
    if np.any(unclassified):
        raise InvariantViolation(
            f"{int(unclassified.sum())} bad blocks are neither frustrated nor "
            "interface; the two classes must partition the bad set"
        )
    return kind


def partition_bad(label: PhaseLabel) -> np.ndarray:
    """Frustrated/interface kinds for the bad blocks (computed at labelling)."""
    return label.bad_kind


@dataclasses.dataclass(frozen=True)
class BadSetReport:
    n_checked: int
    n_frustrated: int
    n_interface: int
    violations: int
    min_slack_log: float  # min over bad blocks of log RHS (>= 0 means bound holds)


def verify_badset_inequalities(
    label: PhaseLabel, bf: BlockField, beta: float, delta: float
) -> BadSetReport:
    """Check the pointwise penalty bounds on every bad block.

    Frustrated blocks must satisfy
    ``1 <= 2 exp(-C sqrt(beta)) sum_{ball} (cosh Q1 + cosh Q2)`` and interface
    blocks ``1 <= 2 exp(-C sqrt(beta)) sum_{ball nn pairs} cosh Q3``, with
    ``C = min(delta/2, 2-2delta)``. Evaluated in log space.
    """
    c_delta = penalty_rate(delta)
    prefix = math.log(2.0) - c_delta * math.sqrt(beta)
    part = label.partition
    lq1 = np.logaddexp(q1_all(bf, beta), -q1_all(bf, beta)) - math.log(2.0)
    lq2 = np.logaddexp(q2_all(bf, beta), -q2_all(bf, beta)) - math.log(2.0)
    phi = bf.phi_avg
    violations = 0
    min_slack = math.inf
    n_f = n_i = 0
    for block in label.bad_blocks:
        kind = label.bad_kind[block]
        ball = part.star_balls[block]
        if kind == FRUSTRATED:
            n_f += 1
            terms = np.concatenate([lq1[ball], lq2[ball]])
        elif kind == INTERFACE:
            n_i += 1
            terms = []
            for a, b in part.star_nn_pairs[block]:
                d = phi[a] - phi[b]
                ad = abs(d)
                terms.append(ad + math.log1p(math.exp(-2.0 * ad)) - math.log(2.0))
            terms = np.asarray(terms)
        else:  # pragma: no cover - bad_blocks are frustrated or interface
            raise InvariantViolation("bad block without a kind")
        m = float(np.max(terms))
        log_rhs = prefix + m + math.log(np.sum(np.exp(terms - m)))
        min_slack = min(min_slack, log_rhs)
        if log_rhs < 0.0:
            violations += 1
    return BadSetReport(
        n_checked=len(label.bad_blocks),
        n_frustrated=n_f,
        n_interface=n_i,
        violations=violations,
        min_slack_log=min_slack,
    )


# ---------------------------------------------------------------------------
# Defects


@dataclasses.dataclass(frozen=True)
class Defect:
    blocks: np.ndarray          # sorted block indices
    small: bool                 # |defect| <= 6 N^gamma and fits in a N/4 ball
    interior: np.ndarray | None  # block indices, includes the defect itself
    exterior: np.ndarray | None
    maximal: bool = False

    @property
    def size(self) -> int:
        return int(self.blocks.size)


@dataclasses.dataclass(frozen=True)
class DefectSet:
    partition: BlockPartition
    gamma: float
    defects: tuple[Defect, ...]


class _UnionFind:
    def __init__(self, items):
        self.parent = {int(i): int(i) for i in items}

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # deterministic: smaller index wins, so component ids are stable
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def star_boundary(
    partition: BlockPartition, region_complement: np.ndarray, strict: bool = True
) -> np.ndarray:
    """Blocks outside ``region_complement``'s complement... concretely: the
    blocks NOT in the given good region that have a *-neighbour in it.

    ``region_complement`` is a boolean mask of the good region G; returns the
    mask of blocks in T \\ G with at least one *-neighbour in G. With
    ``strict=False`` the whole of T \\ G is returned instead (see module open
    question on interior bad blobs).
    """
    outside = ~region_complement
    if not strict:
        return outside
    neighbour_in_region = np.any(region_complement[partition.star_balls], axis=1)
    return outside & neighbour_in_region


def _torus_fits_in_quarter_ball(side: int, coords: np.ndarray) -> tuple[bool, np.ndarray]:
    """Whether the block set fits in a ball of radius side/4 on the torus.

    Returns (fits, centre) with centre in integer block coordinates. Uses the
    per-axis wrapped extent: the set fits iff each axis extent is < side/2
    (then the bounding box diagonal centre works as ball centre for the
    sup-metric check the construction needs).
    """
    dim = coords.shape[1]
    centre = np.zeros(dim)
    for axis in range(dim):
        vals = np.unique(coords[:, axis])
        if vals.size == side:
            return False, centre
        # largest circular gap determines the wrapped extent
        gaps = np.diff(np.concatenate([vals, vals[:1] + side]))
        g = int(np.argmax(gaps))
        start = vals[(g + 1) % vals.size] if g + 1 < vals.size else vals[0] + side
        extent = side - gaps[g]
        if extent > side / 2.0:
            return False, centre
        centre[axis] = (start + extent / 2.0) % side
    return True, centre


def extract_defects(
    label: PhaseLabel, gamma: float, strict_boundary: bool = True
) -> DefectSet:
    """*-connected components of the boundary of the non-minus-good region.

    Components with at most ``6 N^gamma`` blocks that fit in a radius-N/4
    ball are *small* and get interior/exterior sets by nearest-neighbour
    flood fill of the complement, seeded far from the defect. Small defects
    not contained in another small defect's interior are flagged maximal.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError(f"gamma must be in (0,1), got {gamma}")
    part = label.partition
    side = part.side
    minus_good = label.sigma_sign == MINUS
    boundary = star_boundary(part, minus_good, strict=strict_boundary)
    bad = label.sigma_sign == 0
    if strict_boundary and np.any(boundary & ~bad):
        raise InvariantViolation("defect blocks must all be bad blocks")

    idx = np.flatnonzero(boundary)
    uf = _UnionFind(idx)
    in_boundary = boundary
    for i in idx:
        for j in part.star_balls[i]:
            if j != i and in_boundary[j]:
                uf.union(int(i), int(j))
    comps: dict[int, list[int]] = {}
    for i in idx:
        comps.setdefault(uf.find(int(i)), []).append(int(i))

    size_cap = 6.0 * side**gamma
    defects = []
    for root in sorted(comps):
        blocks = np.asarray(sorted(comps[root]), dtype=int)
        small = blocks.size <= size_cap
        interior = exterior = None
        if small:
            coords = part.corners[blocks]
            fits, centre = _torus_fits_in_quarter_ball(side, coords)
            if not fits:
                small = False
            else:
                interior, exterior = _interior_exterior(part, blocks, centre)
        defects.append(
            Defect(blocks=blocks, small=small, interior=interior, exterior=exterior)
        )

    small_defects = [d for d in defects if d.small]
    flagged = []
    for d in defects:
        maximal = False
        if d.small:
            maximal = True
            dset = set(d.blocks.tolist())
            for other in small_defects:
                if other is d:
                    continue
                if dset <= set(other.interior.tolist()) and not (
                    set(other.blocks.tolist()) <= set(d.interior.tolist())
                ):
                    maximal = False
                    break
        flagged.append(dataclasses.replace(d, maximal=maximal))
    return DefectSet(partition=part, gamma=gamma, defects=tuple(flagged))


def _interior_exterior(
    part: BlockPartition, defect_blocks: np.ndarray, centre: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exterior = nearest-neighbour component of the complement containing the
    antipode of the defect centre; interior = everything else (incl. defect)."""
    side = part.side
    n_blocks = part.n_blocks
    blocked = np.zeros(n_blocks, dtype=bool)
    blocked[defect_blocks] = True
    seed_corner = tuple(int(math.floor(c + side / 2.0)) % side for c in centre)
    seed = part.block_index(seed_corner)
    if blocked[seed]:
        raise InvariantViolation("antipodal seed lies inside a small defect")
    visited = np.zeros(n_blocks, dtype=bool)
    visited[seed] = True
    queue = deque([seed])
    nn = part.nn
    while queue:
        cur = queue.popleft()
        for nb in nn[cur]:
            if not visited[nb] and not blocked[nb]:
                visited[nb] = True
                queue.append(int(nb))
    exterior = np.flatnonzero(visited)
    interior = np.flatnonzero(~visited)
    return interior, exterior


def erase_small_defects(label: PhaseLabel, defect_set: DefectSet) -> np.ndarray:
    """Two-step erasure producing a two-valued spin field (+/-sqrt(beta)).

    Step one replaces the spin on bad blocks by +sqrt(beta). Step two
    overwrites the interior of every maximal small defect with the step-one
    value of the defect's exterior *-neighbours, asserting they all agree.
    """
    part = label.partition
    root = math.sqrt(label.beta)
    sigma1 = np.where(label.sigma_sign == 0, 1, label.sigma_sign).astype(float) * root
    sigma2 = sigma1.copy()
    for defect in defect_set.defects:
        if not (defect.small and defect.maximal):
            continue
        ext_mask = np.zeros(part.n_blocks, dtype=bool)
        ext_mask[defect.exterior] = True
        neighbour_vals = set()
        for b in defect.blocks:
            for nb in part.star_balls[b]:
                if ext_mask[nb]:
                    neighbour_vals.add(float(sigma1[nb]))
        if len(neighbour_vals) != 1:
            raise InvariantViolation(
                "exterior *-neighbours of a small defect disagree on the spin"
            )
        sigma2[defect.interior] = neighbour_vals.pop()
    return sigma2


# ---------------------------------------------------------------------------
# Boundary geometry


def boundary_area(partition: BlockPartition, spins: np.ndarray) -> int:
    """Number of block faces separating positive from negative spin."""
    signs = np.sign(np.asarray(spins, dtype=float))
    if np.any(signs == 0):
        raise ConfigurationError("boundary_area needs a two-valued spin field")
    lattice = signs.reshape((partition.side,) * partition.grid.dim)
    faces = 0
    for axis in range(partition.grid.dim):
        faces += int(np.count_nonzero(lattice != np.roll(lattice, 1, axis=axis)))
    return faces


def isoperimetric_check(
    partition: BlockPartition, spins: np.ndarray
) -> tuple[int, float]:
    """(minority volume, minority / area^{3/2}); zero for single-phase fields."""
    if partition.grid.dim != 3:
        raise ConfigurationError("the isoperimetric check is three-dimensional")
    signs = np.sign(np.asarray(spins, dtype=float))
    if np.any(signs == 0):
        raise ConfigurationError("isoperimetric check needs a two-valued spin field")
    n_plus = int(np.count_nonzero(signs > 0))
    min_volume = min(n_plus, signs.size - n_plus)
    area = boundary_area(partition, spins)
    if area == 0:
        return min_volume, 0.0
    return min_volume, min_volume / area**1.5
