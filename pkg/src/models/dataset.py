"""
Dataset models for ivscreen.

This module contains the immutable observation table, the instrument pair
identifiers and pair sets, and the per-(treatment, instrument) group tables
every statistic is computed from.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from src.errors import StructuralError, SchemaError

BOTH = 'both'
UPPER = 'upper'


@dataclass(frozen=True, order=True)
class PairId:
    """Ordered pair (z_k, z_k') of instrument indices."""

    k: int
    kprime: int

    def __post_init__(self):
        if self.k == self.kprime:
            raise StructuralError(f"pair needs two distinct instrument values, got ({self.k}, {self.kprime})")
        if self.k < 0 or self.kprime < 0:
            raise StructuralError(f"pair indices must be non-negative, got ({self.k}, {self.kprime})")

    def reversed(self):
        return PairId(self.kprime, self.k)

    def label(self, support):
        return f'({support[self.k]},{support[self.kprime]})'

    def __repr__(self):
        return f'<PairId {self.k},{self.kprime}>'


class PairSet:
    """
    Ordered, duplicate-free collection of PairId.

    Orientation `both` admits either order of a pair (binary and ordered
    treatments); `upper` admits only k < k' (unordered treatments).
    """

    def __init__(self, pairs: Iterable[PairId] = (), orientation: str = BOTH):
        if orientation not in (BOTH, UPPER):
            raise StructuralError(f"unknown pair orientation: {orientation!r}")
        self.orientation = orientation
        seen = []
        for pair in pairs:
            if not isinstance(pair, PairId):
                pair = PairId(*pair)
            if orientation == UPPER and pair.k > pair.kprime:
                raise StructuralError(f"upper-triangle pair set cannot hold {pair!r}")
            if pair not in seen:
                seen.append(pair)
        self._pairs = tuple(seen)

    @classmethod
    def universe(cls, K, orientation=BOTH):
        """All pairs over K values in the estimator layout (1,2)…(1,K)…(K,1)…(K,K−1)."""
        if orientation == UPPER:
            return cls((PairId(k, kp) for k, kp in combinations(range(K), 2)), UPPER)
        return cls((PairId(k, kp) for k in range(K) for kp in range(K) if k != kp), BOTH)

    @classmethod
    def upper_triangle(cls, K, orientation=BOTH):
        """The conventional presumed set {(k, k'): k < k'}."""
        return cls((PairId(k, kp) for k, kp in combinations(range(K), 2)), orientation)

    def __iter__(self):
        return iter(self._pairs)

    def __len__(self):
        return len(self._pairs)

    def __contains__(self, pair):
        return pair in self._pairs

    def __getitem__(self, index):
        return self._pairs[index]

    def __eq__(self, other):
        if not isinstance(other, PairSet):
            return NotImplemented
        return set(self._pairs) == set(other._pairs)

    def __hash__(self):
        return hash(frozenset(self._pairs))

    def __repr__(self):
        body = ', '.join(f'({p.k},{p.kprime})' for p in self._pairs)
        return f'<PairSet {self.orientation} [{body}]>'

    def intersection(self, other):
        keep = set(other)
        return PairSet((p for p in self._pairs if p in keep), self.orientation)

    def issubset(self, other):
        return all(p in other for p in self._pairs)

    def values(self):
        """Sorted instrument indices touched by any pair."""
        return sorted({i for p in self._pairs for i in (p.k, p.kprime)})

    def to_list(self):
        return [(p.k, p.kprime) for p in self._pairs]


def _as_support(values):
    support = tuple(values)
    if len(set(support)) != len(support):
        raise SchemaError(f"support labels must be distinct: {support}")
    return support


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Immutable table of (y, d, z) rows.

    `d` and `z` hold dense indices into `treatment_support` and
    `instrument_support`; the original labels are kept for reporting.
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    treatment_support: Tuple
    instrument_support: Tuple
    ordered: bool = True
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        d = np.ascontiguousarray(self.d, dtype=np.int64)
        z = np.ascontiguousarray(self.z, dtype=np.int64)
        if not (y.ndim == d.ndim == z.ndim == 1) or not (len(y) == len(d) == len(z)):
            raise StructuralError('y, d and z must be one-dimensional and of equal length')
        if len(y) < 1:
            raise StructuralError('a dataset needs at least one row')
        if not np.all(np.isfinite(y)):
            raise SchemaError('outcomes must be finite reals')
        tsupport = _as_support(self.treatment_support)
        isupport = _as_support(self.instrument_support)
        if len(tsupport) < 2:
            raise StructuralError(f"need at least two treatment values, got {len(tsupport)}")
        if len(isupport) < 2:
            raise StructuralError(f"need at least two instrument values, got {len(isupport)}")
        if d.min() < 0 or d.max() >= len(tsupport):
            raise SchemaError('treatment index outside the declared support')
        if z.min() < 0 or z.max() >= len(isupport):
            raise SchemaError('instrument index outside the declared support')
        if self.ordered:
            try:
                labels = np.asarray(tsupport, dtype=np.float64)
            except (TypeError, ValueError):
                raise SchemaError('ordered treatments need numeric labels')
            if np.any(np.diff(labels) <= 0):
                raise SchemaError('ordered treatment labels must be strictly increasing')
        for name, arr in (('y', y), ('d', d), ('z', z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, 'treatment_support', tsupport)
        object.__setattr__(self, 'instrument_support', isupport)

    @classmethod
    def from_labels(cls, y, d_labels, z_labels, treatment_support=None,
                    instrument_support=None, ordered=True, source=None):
        """Build from raw labels; supports default to the sorted distinct values."""
        d_labels = list(d_labels)
        z_labels = list(z_labels)
        if treatment_support is None:
            treatment_support = sorted(set(d_labels))
        if instrument_support is None:
            instrument_support = sorted(set(z_labels))
        d_index = {label: i for i, label in enumerate(treatment_support)}
        z_index = {label: i for i, label in enumerate(instrument_support)}
        try:
            d = [d_index[label] for label in d_labels]
        except KeyError as e:
            raise SchemaError(f"treatment value {e.args[0]!r} is not in the declared support")
        try:
            z = [z_index[label] for label in z_labels]
        except KeyError as e:
            raise SchemaError(f"instrument value {e.args[0]!r} is not in the declared support")
        return cls(np.asarray(y, dtype=np.float64), np.asarray(d), np.asarray(z),
                   tuple(treatment_support), tuple(instrument_support), ordered, source)

    @property
    def n(self):
        return len(self.y)

    @property
    def J(self):
        return len(self.treatment_support)

    @property
    def K(self):
        return len(self.instrument_support)

    @cached_property
    def treatment_values(self):
        """Numeric value of D per row (labels of ordered/binary treatments)."""
        if not self.ordered:
            raise StructuralError('unordered treatments have no numeric value')
        labels = np.asarray(self.treatment_support, dtype=np.float64)
        return labels[self.d]

    @cached_property
    def tables(self):
        return GroupTables.build(self)

    def pair_universe(self):
        return PairSet.universe(self.K, BOTH if self.ordered else UPPER)

    def pair_labels(self, pair):
        return pair.label(self.instrument_support)

    def __repr__(self):
        return f'<Dataset n={self.n} J={self.J} K={self.K}>'


@dataclass(frozen=True, eq=False)
class CellTable:
    """Sorted distinct outcomes of one (d, z) cell with cumulative counts."""

    values: np.ndarray
    cumulative: np.ndarray  # cumulative[i] = rows with y <= values[i-1]; cumulative[0] = 0

    @classmethod
    def build(cls, outcomes):
        values, counts = np.unique(outcomes, return_counts=True)
        cumulative = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        return cls(values, cumulative)

    @property
    def total(self):
        return int(self.cumulative[-1])

    def count_le(self, b):
        return self.cumulative[np.searchsorted(self.values, b, side='right')]

    def count_lt(self, a):
        return self.cumulative[np.searchsorted(self.values, a, side='left')]

    def count_closed(self, a, b):
        """Rows with a <= y <= b (vectorized over a, b)."""
        return self.count_le(b) - self.count_lt(a)

    def count_half_open(self, a, b):
        """Rows with a < y <= b (vectorized over a, b)."""
        return self.count_le(b) - self.count_le(a)


@dataclass(frozen=True, eq=False)
class GroupTables:
    n: int
    cells: Tuple[Tuple[CellTable, ...], ...]  # cells[d][z]
    z_counts: np.ndarray
    cell_counts: np.ndarray
    y_sums: np.ndarray
    grid: np.ndarray

    @classmethod
    def build(cls, dataset: Dataset):
        J, K = dataset.J, dataset.K
        cells = []
        cell_counts = np.zeros((J, K), dtype=np.int64)
        y_sums = np.zeros((J, K), dtype=np.float64)
        for d in range(J):
            row = []
            for z in range(K):
                mask = (dataset.d == d) & (dataset.z == z)
                outcomes = dataset.y[mask]
                row.append(CellTable.build(outcomes))
                cell_counts[d, z] = len(outcomes)
                y_sums[d, z] = outcomes.sum()
            cells.append(tuple(row))
        z_counts = cell_counts.sum(axis=0)
        return cls(dataset.n, tuple(cells), z_counts, cell_counts, y_sums, np.unique(dataset.y))

    @property
    def J(self):
        return len(self.cells)

    @property
    def K(self):
        return len(self.z_counts)

    def cell(self, d, z) -> CellTable:
        return self.cells[d][z]

    def t_n(self):
        """T_n = n · prod_k P̂(Z = z_k), accumulated in count form."""
        value = float(self.n)
        for count in self.z_counts:
            value *= count / self.n
        return value


@dataclass(frozen=True, eq=False)
class ComponentTable:
    """Outcomes and treatments with an instrument split into L named components."""

    y: np.ndarray
    d_labels: Sequence
    components: np.ndarray  # n × L labels
    names: Tuple[str, ...]
    ordered: bool = True

    @property
    def L(self):
        return len(self.names)

    def subinstrument(self, columns):
        """Dataset whose instrument is the tuple of the chosen component values."""
        columns = list(columns)
        labels = [tuple(row) for row in self.components[:, columns]]
        if len(columns) == 1:
            labels = [label[0] for label in labels]
        return Dataset.from_labels(self.y, self.d_labels, labels, ordered=self.ordered)
