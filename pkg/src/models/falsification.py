"""
Falsification result models.

This module contains the interval-indexed test functions, the per-pair
supremum statistic, the ψ bound report and the validity set
estimate assembled from them.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.errors import ArgumentError
from src.models.dataset import PairId, PairSet

INTERVAL = 'interval'
THRESHOLD = 'threshold'
ABS_SUP = 'abs-sup'
POS_PART = 'pos-part'


@dataclass(frozen=True)
class HFunction:
    """
    A signed test function h.

    `interval` is sign·1{a <= Y <= b, D = d_arm}; `threshold` is
    1{D <= d_arm}, the first-order dominance check of ordered treatments.
    """

    kind: str
    arm: int
    sign: int = 1
    a: float = float('-inf')
    b: float = float('inf')

    def __post_init__(self):
        if self.kind not in (INTERVAL, THRESHOLD):
            raise ArgumentError(f"unknown test function kind {self.kind!r}")
        if self.sign not in (1, -1):
            raise ArgumentError('sign must be +1 or -1')
        if self.kind == INTERVAL and self.a > self.b:
            raise ArgumentError(f"interval endpoints out of order: [{self.a}, {self.b}]")

    def describe(self, treatment_support=None):
        label = treatment_support[self.arm] if treatment_support is not None else self.arm
        if self.kind == THRESHOLD:
            return f'1{{D<={label}}}'
        prefix = '' if self.sign > 0 else '-'
        return f'{prefix}1[{self.a:g},{self.b:g}]x{{{label}}}'

    def to_dict(self):
        return {
            'kind': self.kind,
            'arm': self.arm,
            'sign': self.sign,
            'a': None if np.isinf(self.a) else self.a,
            'b': None if np.isinf(self.b) else self.b,
        }


@dataclass(frozen=True)
class SupStatistic:
    pair: PairId
    value: float
    raw_sup: float
    witness: Optional[HFunction]
    variant: str
    t_n: float
    mode: str = 'binary'
    degenerate: bool = False

    def to_dict(self, dataset=None):
        tsupport = dataset.treatment_support if dataset is not None else None
        return {
            'pair': dataset.pair_labels(self.pair) if dataset is not None else [self.pair.k, self.pair.kprime],
            'statistic': self.value,
            'raw_sup': self.raw_sup,
            'witness': self.witness.describe(tsupport) if self.witness else None,
            'variant': self.variant,
            't_n': self.t_n,
            'mode': self.mode,
            'degenerate': self.degenerate,
        }


class PartitionCollection:
    """
    Finite collection of partitions of the real line.

    Each partition is stored by its interior cut points c_1 < … < c_{Q−1};
    its cells are (−∞, c_1], (c_1, c_2], …, (c_{Q−1}, ∞).
    """

    def __init__(self, cut_points: Sequence[Sequence[float]]):
        partitions = []
        for cuts in cut_points:
            cuts = np.asarray(cuts, dtype=np.float64).ravel()
            if not np.all(np.isfinite(cuts)):
                raise ArgumentError('partition cut points must be finite')
            if np.any(np.diff(cuts) <= 0):
                raise ArgumentError('partition cut points must be strictly increasing')
            partitions.append(cuts)
        if not partitions:
            raise ArgumentError('a partition collection needs at least one partition')
        self.partitions: List[np.ndarray] = partitions

    def __len__(self):
        return len(self.partitions)

    def __iter__(self):
        return iter(self.partitions)

    @staticmethod
    def cells(cuts):
        """(lower, upper) bounds of every cell of one partition."""
        lower = np.concatenate(([-np.inf], cuts))
        upper = np.concatenate((cuts, [np.inf]))
        return lower, upper

    def __repr__(self):
        return f'<PartitionCollection sizes={[len(c) + 1 for c in self.partitions]}>'


@dataclass(frozen=True)
class PsiReport:
    pair: PairId
    psi1: float
    psi2: float
    psi3: float
    t_n: float
    threshold: float

    @property
    def comparand(self):
        return float(np.sqrt(self.t_n) * max(self.psi1, self.psi2, self.psi3))

    @property
    def passes(self):
        return self.comparand <= self.threshold

    def to_dict(self):
        return {
            'psi1': self.psi1,
            'psi2': self.psi2,
            'psi3': self.psi3,
            'km_comparand': self.comparand,
            'km_threshold': self.threshold,
        }


@dataclass
class PairScreen:
    """Screening outcome for one pair inside a validity set estimate."""

    statistic: float
    included: bool
    degenerate: bool = False
    sup: Optional[SupStatistic] = None
    psi: Optional[PsiReport] = None


@dataclass
class ValiditySetEstimate:
    selected: PairSet
    per_pair: Dict[PairId, PairScreen]
    tau_n: float
    xi0: float
    mode: str
    sources: str
    universe: Optional[PairSet] = None
    notes: List[str] = field(default_factory=list)

    def records(self, dataset=None):
        """One flat dict per screened pair, in universe order."""
        rows = []
        for pair, screen in self.per_pair.items():
            row = screen.sup.to_dict(dataset) if screen.sup is not None else {
                'pair': dataset.pair_labels(pair) if dataset is not None else [pair.k, pair.kprime],
                'statistic': screen.statistic,
            }
            row['included'] = screen.included
            row['degenerate'] = screen.degenerate
            if screen.psi is not None:
                row.update(screen.psi.to_dict())
            row['tau_n'] = self.tau_n
            rows.append(row)
        return rows
