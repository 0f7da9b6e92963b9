#!/usr/bin/env python3
"""
Truncated Coagulation Operator
------------------------------
Sectional form of Q_n on a geometric grid. The gain of a pair (x_i, x_j) is
split between the two centers bracketing x_i + x_j so that both the number
and the first moment of the merged particles are placed exactly; pairs whose
sum lies beyond the last center feed an overflow ledger instead.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from errors import ConfigurationError, DomainError
from grid import DensityState, SizeGrid, l1_norm
from kernels import TruncatedKernel, evaluate_truncated

logger = logging.getLogger(__name__)

PAIR_MODES = ("upper", "full")


@dataclass(frozen=True, eq=False)
class PairTable:
    kernel: TruncatedKernel
    grid: SizeGrid
    mode: str
    kmat: np.ndarray = field(repr=False)
    first: np.ndarray = field(repr=False)
    second: np.ndarray = field(repr=False)
    factor: np.ndarray = field(repr=False)
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)
    w_lo: np.ndarray = field(repr=False)
    w_hi: np.ndarray = field(repr=False)
    overflow: np.ndarray = field(repr=False)

    @property
    def pairs(self) -> int:
        return int(self.first.size)

    def cache_key(self) -> str:
        return f"{self.kernel.base.digest()}-{self.grid.digest()}-n{self.kernel.n}-{self.mode}"


@dataclass(frozen=True)
class QnResult:
    rates: np.ndarray
    overflow_mass: float
    overflow_number: float


def split_target(centers: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Bracketing centers and weights with w_lo + w_hi = 1, w_lo x_lo + w_hi x_hi = target"""
    target = np.asarray(target, dtype=float)
    last = centers.size - 1
    overflow = target > centers[-1]
    lo = np.clip(np.searchsorted(centers, target, side="right") - 1, 0, last)
    hi = np.minimum(lo + 1, last)
    gap = centers[hi] - centers[lo]
    exact = gap == 0
    w_hi = np.where(exact, 0.0, (target - centers[lo]) / np.where(exact, 1.0, gap))
    w_lo = np.where(exact, 1.0, (centers[hi] - target) / np.where(exact, 1.0, gap))
    w_hi = np.where(overflow, 0.0, w_hi)
    w_lo = np.where(overflow, 0.0, w_lo)
    return lo, hi, w_lo, w_hi, overflow


def check_compatible(kernel: TruncatedKernel, grid: SizeGrid):
    if kernel.lower < grid.vmin or kernel.upper > grid.vmax:
        raise ConfigurationError(
            f"truncation window [1/{kernel.n}, {kernel.n}] must lie inside the grid [{grid.vmin:g}, {grid.vmax:g}]")


def build_pair_table(kernel: TruncatedKernel, grid: SizeGrid, mode: str = "upper") -> PairTable:
    """Kernel values at cell centers plus the gain split of every interacting pair"""
    check_compatible(kernel, grid)
    if mode not in PAIR_MODES:
        raise DomainError(f"pair enumeration must be one of {PAIR_MODES}, got {mode!r}")
    x = grid.centers
    v1, v2 = np.meshgrid(x, x, indexing="ij")
    kmat = np.asarray(evaluate_truncated(kernel, v1, v2), dtype=float)
    kmat.setflags(write=False)

    if mode == "upper":
        first, second = np.nonzero(np.triu(kmat) > 0)
        factor = np.where(first == second, 0.5, 1.0)
    else:
        first, second = np.nonzero(kmat > 0)
        factor = np.full(first.size, 0.5)
    lo, hi, w_lo, w_hi, overflow = split_target(x, x[first] + x[second])
    table = PairTable(kernel, grid, mode, kmat, first, second, factor, lo, hi, w_lo, w_hi, overflow)
    logger.debug("pair table: %d interacting pairs (%d overflow) on %d cells, n=%d",
                 table.pairs, int(np.sum(overflow)), grid.cells, kernel.n)
    return table


def apply_qn_with_overflow(state: DensityState, table: PairTable) -> QnResult:
    grid = table.grid
    if not state.grid.same_as(grid):
        raise DomainError("state and pair table live on different grids")
    return _apply(state.values, table)


def _apply(values: np.ndarray, table: PairTable) -> QnResult:
    grid = table.grid
    number = values * grid.widths
    loss = values * (table.kmat @ number)
    if table.pairs == 0:
        return QnResult(-loss, 0.0, 0.0)
    collisions = table.factor * table.kmat[table.first, table.second] * number[table.first] * number[table.second]
    inside = ~table.overflow
    gain_number = (np.bincount(table.lo[inside], weights=collisions[inside] * table.w_lo[inside], minlength=grid.cells)
                   + np.bincount(table.hi[inside], weights=collisions[inside] * table.w_hi[inside], minlength=grid.cells))
    gone = collisions[table.overflow]
    merged = grid.centers[table.first[table.overflow]] + grid.centers[table.second[table.overflow]]
    return QnResult(gain_number / grid.widths - loss, float(np.sum(gone * merged)), float(np.sum(gone)))


def apply_qn(state: DensityState, table: PairTable) -> np.ndarray:
    """Q_n(c) per cell as a density rate (gain - loss)"""
    return apply_qn_with_overflow(state, table).rates


def apply_qn_values(values: np.ndarray, table: PairTable) -> QnResult:
    """Q_n on a raw value array already known to live on the table's grid"""
    return _apply(np.asarray(values, dtype=float), table)


def collision_rate(values: np.ndarray, table: PairTable) -> float:
    """1/2 sum K_n c c w w, the weak-form rate of phi = 1 with a minus sign removed"""
    number = values * table.grid.widths
    return 0.5 * float(number @ (table.kmat @ number))


def lipschitz_probe(table: PairTable, c1: DensityState, c2: DensityState) -> Optional[float]:
    """||Q(c1) - Q(c2)|| / (||c1 - c2|| (||c1|| + ||c2||)); None when c1 == c2"""
    if not (c1.grid.same_as(table.grid) and c2.grid.same_as(table.grid)):
        raise DomainError("lipschitz_probe needs both states on the table's grid")
    grid = table.grid
    distance = l1_norm(c1.values - c2.values, grid)
    if distance == 0:
        logger.debug("lipschitz probe skipped: identical states")
        return None
    size = l1_norm(c1.values, grid) + l1_norm(c2.values, grid)
    difference = l1_norm(apply_qn(c1, table) - apply_qn(c2, table), grid)
    return difference / (distance * size)


def save_pair_table(table: PairTable, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"pairs-{table.cache_key()}.npz")
    np.savez_compressed(path, kmat=table.kmat, first=table.first, second=table.second, factor=table.factor,
                        lo=table.lo, hi=table.hi, w_lo=table.w_lo, w_hi=table.w_hi, overflow=table.overflow,
                        edges=table.grid.edges)
    logger.info("pair table cached at %s", path)
    return path


def load_pair_table(directory: str, kernel: TruncatedKernel, grid: SizeGrid, mode: str = "upper") -> Optional[PairTable]:
    """Cached table for (kernel, grid, n) or None when absent or stale"""
    probe = f"pairs-{kernel.base.digest()}-{grid.digest()}-n{kernel.n}-{mode}.npz"
    path = os.path.join(directory, probe)
    if not os.path.isfile(path):
        return None
    with np.load(path) as data:
        if not np.array_equal(data["edges"], grid.edges):
            logger.warning("ignoring stale pair table %s", path)
            return None
        return PairTable(kernel, grid, mode, data["kmat"], data["first"], data["second"], data["factor"],
                         data["lo"], data["hi"], data["w_lo"], data["w_hi"], data["overflow"])
