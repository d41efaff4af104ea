"""Block observables: magnetisation, block averages of the field and its
Wick square, and the three block-penalty variables with their cosh products.

Blocks are the unit cubes of the integer partition of the torus. For a block
of unit volume the block integral and the block average coincide, so
``phi_avg`` stores both readings of "phi(block)".
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .gff import ModelParams, lattice_green_zero, wick_power
from .torus import BlockPartition, ConfigurationError, Field, make_blocks

LOG2 = math.log(2.0)


@dataclasses.dataclass(frozen=True)
class BlockField:
    """Per-block integrals of the field and of its Wick square."""

    partition: BlockPartition
    phi_avg: np.ndarray
    wick2_avg: np.ndarray

    def __post_init__(self):
        n = self.partition.n_blocks
        if self.phi_avg.shape != (n,) or self.wick2_avg.shape != (n,):
            raise ConfigurationError("block arrays must have one entry per block")
        if not (np.all(np.isfinite(self.phi_avg)) and np.all(np.isfinite(self.wick2_avg))):
            raise ConfigurationError("block observables must be finite")


def magnetisation(field: Field) -> float:
    """Volume-normalised field integral; equals the plain site mean."""
    return float(np.mean(field.values))


def lattice_wick_square(field: Field, params: ModelParams) -> Field:
    """:phi^2: with the lattice Green-function tadpole as Wick constant."""
    t = lattice_green_zero(field.grid, params)
    return wick_power(field, 2, t)


def block_average(
    field: Field, wick2: Field, partition: BlockPartition | None = None
) -> BlockField:
    """Per-block integrals (eps^dim-weighted site sums) of phi and :phi^2:."""
    if wick2.grid != field.grid:
        raise ConfigurationError("field and wick2 live on different grids")
    if partition is None:
        partition = make_blocks(field.grid)
    return BlockField(
        partition=partition,
        phi_avg=partition.block_integrals(field.values),
        wick2_avg=partition.block_integrals(wick2.values),
    )


def q1(bf: BlockField, block: int, beta: float) -> float:
    """Penalty for the Wick square deviating from beta on one block."""
    return (beta - bf.wick2_avg[block]) / math.sqrt(beta)


def q2(bf: BlockField, block: int, beta: float) -> float:
    """Penalty for in-block fluctuation: Wick square minus squared block mean."""
    return (bf.wick2_avg[block] - bf.phi_avg[block] ** 2) / math.sqrt(beta)


def q3(bf: BlockField, block_a: int, block_b: int) -> float:
    """Jump of the block mean across a nearest-neighbour pair (antisymmetric)."""
    if block_b not in bf.partition.nn[block_a]:
        raise ConfigurationError(
            f"blocks {block_a} and {block_b} are not nearest neighbours"
        )
    return float(bf.phi_avg[block_a] - bf.phi_avg[block_b])


def q1_all(bf: BlockField, beta: float) -> np.ndarray:
    return (beta - bf.wick2_avg) / math.sqrt(beta)


def q2_all(bf: BlockField, beta: float) -> np.ndarray:
    return (bf.wick2_avg - bf.phi_avg**2) / math.sqrt(beta)


def _log_cosh(x: np.ndarray) -> np.ndarray:
    """log(cosh x), overflow-safe: |x| + log1p(e^{-2|x|}) - log 2."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LOG2


def log_cosh_products(
    bf: BlockField,
    beta: float,
    b1: "list[int] | np.ndarray" = (),
    b2: "list[int] | np.ndarray" = (),
    b3: "list[tuple[int, int]]" = (),
    a1: float = 1.0,
    a2: float = 1.0,
    a3: float = 1.0,
) -> float:
    """log of prod cosh(a1 Q1) * prod cosh(a2 Q2) * prod cosh(a3 Q3).

    b1, b2 are block index sets; b3 is a set of nearest-neighbour index pairs.
    Accumulated in log space with compensated summation, so the value is
    finite for arbitrarily large penalties.
    """
    terms: list[float] = []
    b1 = np.asarray(b1, dtype=int)
    b2 = np.asarray(b2, dtype=int)
    if b1.size:
        terms.extend(_log_cosh(a1 * q1_all(bf, beta)[b1]).tolist())
    if b2.size:
        terms.extend(_log_cosh(a2 * q2_all(bf, beta)[b2]).tolist())
    for pair in b3:
        terms.append(float(_log_cosh(np.asarray(a3 * q3(bf, pair[0], pair[1])))))
    return math.fsum(terms)


def cosh_products(
    bf: BlockField,
    beta: float,
    b1: "list[int] | np.ndarray" = (),
    b2: "list[int] | np.ndarray" = (),
    b3: "list[tuple[int, int]]" = (),
    a1: float = 1.0,
    a2: float = 1.0,
    a3: float = 1.0,
) -> float:
    log_val = log_cosh_products(bf, beta, b1, b2, b3, a1, a2, a3)
    if log_val > 700.0:
        raise OverflowError(
            f"cosh product overflows double precision (log value {log_val}); "
            "use log_cosh_products"
        )
    return math.exp(log_val)


def log_mean_exp(log_terms: "np.ndarray | list[float]") -> float:
    """log of the average of exp(log_terms), stable and compensated."""
    arr = np.asarray(log_terms, dtype=float)
    if arr.size == 0:
        raise ValueError("log_mean_exp of an empty sequence")
    m = float(np.max(arr))
    return m + math.log(math.fsum(np.exp(arr - m).tolist()) / arr.size)
