"""
Partition-based ψ statistics for multivalued treatments.

This module provides ψ̂(h, f, g) = P̂(h·f·g)/P̂(g) over half-open outcome
cells, the three ψ conditions over a finite partition collection, and the
Ẑ₂ pair set {pairs : √T_n ψ̂_l <= t_n, l = 1, 2, 3}.
"""

from functools import reduce
from itertools import product
import logging

import numpy as np

from src.config import Config
from src.errors import ArgumentError, GuardError, StructuralError
from src.models.dataset import PairSet
from src.models.falsification import PartitionCollection, PsiReport

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (2, 3, 5)


def quantile_partitions(dataset, sizes=DEFAULT_SIZES):
    """One partition per Q in sizes, cut at the pooled outcome quantiles q/Q."""
    cut_points = []
    for Q in sizes:
        if Q < 1:
            raise ArgumentError('partition sizes must be positive')
        probs = np.arange(1, Q) / Q
        cut_points.append(np.unique(np.quantile(dataset.y, probs)) if Q > 1 else np.array([]))
    return PartitionCollection(cut_points)


def psi_hat(tables, a, b, d, z):
    """P̂(a < Y <= b, D = d | Z = z); zero for an empty instrument group."""
    if a > b:
        raise ArgumentError(f"cell endpoints out of order: ({a}, {b}]")
    size = tables.z_counts[z]
    if size == 0:
        logger.warning(f"Instrument value {z} has no observations; psi set to 0")
        return 0.0
    return float(tables.cell(d, z).count_half_open(a, b) / size)


def psi_grid(dataset, km_grid=Config.KM_GRID):
    """
    Endpoints scanned for the ψ₃ supremum: realized outcomes, thinned to
    km_grid quantiles, between −∞ and +∞ so the unbounded cells are scanned.
    """
    grid = dataset.tables.grid
    if len(grid) > km_grid:
        grid = np.unique(np.quantile(dataset.y, np.linspace(0.0, 1.0, km_grid)))
    return np.concatenate(([-np.inf], grid, [np.inf]))


class _PairMasses:
    """Conditional cell masses of one pair, per partition, arm and instrument slot."""

    def __init__(self, tables, pair, partitions):
        self.tables = tables
        self.slots = (pair.k, pair.kprime)
        self.sizes = np.array([tables.z_counts[k] for k in self.slots], dtype=np.float64)
        self.by_partition = []
        for cuts in partitions:
            lower, upper = PartitionCollection.cells(cuts)
            masses = np.zeros((tables.J, 2, len(lower)))
            for d in range(tables.J):
                for slot, k in enumerate(self.slots):
                    masses[d, slot] = self.conditional(tables.cell(d, k).count_half_open(lower, upper), slot)
            self.by_partition.append(masses)

    def conditional(self, counts, slot):
        if self.sizes[slot] == 0:
            return np.zeros_like(counts, dtype=np.float64)
        return counts / self.sizes[slot]


def _psi1(masses):
    best = -np.inf
    for m in masses.by_partition:
        best = max(best, float(m.max(axis=1).sum(axis=1).max()))
    return best - 1.0


def _tuple_masses(masses, combo, slot):
    return [masses.by_partition[p][j, slot] for j, p in enumerate(combo)]


def _psi2(masses, combos):
    smallest = np.inf
    for combo in combos:
        totals = [reduce(np.add.outer, _tuple_masses(masses, combo, slot)) for slot in (0, 1)]
        smallest = min(smallest, float(np.minimum(totals[0], totals[1]).sum()))
    return 1.0 - smallest


def _psi3(masses, combos, grid, J):
    lo, hi = np.triu_indices(len(grid), k=1)
    a, b = grid[lo], grid[hi]
    if a.size == 0:
        return -np.inf
    best = -np.inf
    for j in range(J):
        u = np.stack([masses.conditional(masses.tables.cell(j, k).count_half_open(a, b), slot)
                      for slot, k in enumerate(masses.slots)], axis=1)
        seen = set()
        for combo in combos:
            others = tuple(p for i, p in enumerate(combo) if i != j)
            if others in seen:
                continue
            seen.add(others)
            rest = []
            for slot in (0, 1):
                arrays = [masses.by_partition[p][xi, slot]
                          for xi, p in zip((i for i in range(J) if i != j), others)]
                rest.append(np.ravel(reduce(np.add.outer, arrays)))
            phi_tilde = np.minimum(u[:, :1] + rest[0][None, :], u[:, 1:] + rest[1][None, :]).sum(axis=1)
            best = max(best, float((u.max(axis=1) - phi_tilde).max()))
    return best


def psi_bounds(dataset, pair, partitions=None, threshold=Config.TAU, km_grid=Config.KM_GRID,
               max_tuples=Config.MAX_PARTITION_TUPLES):
    """
    ψ̂₁, ψ̂₂, ψ̂₃ for one pair.

    Args:
        dataset (Dataset): observations
        pair (PairId): instrument pair; the ψ conditions are symmetric in its order
        partitions (PartitionCollection): defaults to quantile partitions with Q in {2, 3, 5}
        threshold (float): t_n, recorded on the report
        km_grid (int): cap on the ψ₃ endpoint grid
        max_tuples (int): cap on |𝒫|^J

    Returns:
        PsiReport
    """
    tables = dataset.tables
    if tables.J < 2:
        raise StructuralError('ψ statistics need at least two treatment values')
    if pair.k >= tables.K or pair.kprime >= tables.K:
        raise StructuralError(f"pair {pair!r} is outside the {tables.K} instrument values")
    partitions = partitions if partitions is not None else quantile_partitions(dataset)
    n_combos = len(partitions) ** tables.J
    if n_combos > max_tuples:
        raise GuardError(f"{len(partitions)} partitions over {tables.J} treatments give {n_combos} "
                         f"tuples, above the limit of {max_tuples}")
    masses = _PairMasses(tables, pair, partitions)
    combos = list(product(range(len(partitions)), repeat=tables.J))
    report = PsiReport(
        pair=pair,
        psi1=_psi1(masses),
        psi2=_psi2(masses, combos),
        psi3=_psi3(masses, combos, psi_grid(dataset, km_grid), tables.J),
        t_n=tables.t_n(),
        threshold=threshold,
    )
    logger.debug(f"Pair {pair!r}: psi = ({report.psi1:.4g}, {report.psi2:.4g}, {report.psi3:.4g})")
    return report


def brute_force_psi(dataset, pair, partitions, km_grid=Config.KM_GRID, max_n=Config.BRUTE_FORCE_MAX_N):
    """
    (ψ̂₁, ψ̂₂, ψ̂₃) by enumerating every partition tuple, cell tuple and scan
    cell with scalar psi_hat calls; no mass arrays are shared.
    """
    if dataset.n > max_n:
        raise GuardError(f"brute force is limited to n <= {max_n}, got {dataset.n}")
    tables = dataset.tables
    slots = (pair.k, pair.kprime)
    J = tables.J
    cells = [list(zip(*PartitionCollection.cells(cuts))) for cuts in partitions]

    def psi(cell, d, z):
        return psi_hat(tables, cell[0], cell[1], d, z)

    def joint_min(cell_tuple):
        return min(sum(psi(cell, d, z) for d, cell in enumerate(cell_tuple)) for z in slots)

    psi1 = max(sum(max(psi(cell, d, z) for z in slots) for cell in partition)
               for partition in cells for d in range(J)) - 1.0
    combos = list(product(cells, repeat=J))
    psi2 = 1.0 - min(sum(joint_min(t) for t in product(*combo)) for combo in combos)

    grid = psi_grid(dataset, km_grid)
    scan = [(grid[i], grid[k]) for i in range(len(grid)) for k in range(i + 1, len(grid))]
    psi3 = -np.inf
    for combo in combos:
        for j in range(J):
            others = [combo[i] for i in range(J) if i != j]
            for cell in scan:
                tilde = sum(joint_min(rest[:j] + (cell,) + rest[j:]) for rest in product(*others))
                psi3 = max(psi3, max(psi(cell, j, z) for z in slots) - tilde)
    return psi1, psi2, psi3


def psi_reports(dataset, pairs, partitions=None, threshold=Config.TAU, km_grid=Config.KM_GRID,
                max_tuples=Config.MAX_PARTITION_TUPLES):
    """ψ reports for every pair; both orientations of a pair share one report."""
    partitions = partitions if partitions is not None else quantile_partitions(dataset)
    reports = {}
    for pair in pairs:
        twin = pair.reversed()
        if twin in reports:
            r = reports[twin]
            reports[pair] = PsiReport(pair, r.psi1, r.psi2, r.psi3, r.t_n, r.threshold)
        else:
            reports[pair] = psi_bounds(dataset, pair, partitions, threshold, km_grid, max_tuples)
    return reports


def z2_hat(dataset, pairs, partitions=None, t_n=Config.TAU, mode='ordered', km_grid=Config.KM_GRID,
           max_tuples=Config.MAX_PARTITION_TUPLES):
    """Pairs passing all three ψ conditions; binary treatments bypass the check."""
    if t_n <= 0:
        raise ArgumentError('t_n must be positive')
    pairs = pairs if isinstance(pairs, PairSet) else PairSet(pairs)
    if mode == 'binary':
        return pairs
    reports = psi_reports(dataset, pairs, partitions, t_n, km_grid, max_tuples)
    kept = PairSet((p for p in pairs if reports[p].passes), pairs.orientation)
    logger.info(f"Z2 keeps {len(kept)} of {len(pairs)} pairs at t_n={t_n}")
    return kept
