"""
Simulation models: data-generating process specs, latent draws and Monte
Carlo selection reports.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.errors import ArgumentError

FAMILIES = ('section5', 'qob_calibrated', 'custom', 'ordered', 'unordered', 'confounded_components')
INDEXED_FAMILIES = ('section5', 'qob_calibrated')


@dataclass(frozen=True)
class DgpSpec:
    """
    A data-generating process.

    `section5` and `qob_calibrated` take `variant` 1–4; the other families
    read their parameters from `params`.
    """

    family: str
    variant: int = 1
    n: int = 1500
    seed: int = 0
    params: Dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ArgumentError(f"unknown DGP family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        if self.family in INDEXED_FAMILIES and self.variant not in (1, 2, 3, 4):
            raise ArgumentError(f"{self.family} DGP index must be 1-4, got {self.variant}")
        if self.n < 1:
            raise ArgumentError('n must be at least 1')
        probs = self.params.get('z_probs')
        if probs is not None:
            probs = np.asarray(probs, dtype=np.float64)
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
                raise ArgumentError('z_probs must be non-negative and sum to 1')
        for key in ('d_probs', 'weights'):
            values = self.params.get(key)
            if values is not None and np.any((np.asarray(values) < 0) | (np.asarray(values) > 1)):
                raise ArgumentError(f"{key} must lie in [0, 1]")
        weights = self.params.get('weights')
        if weights is not None and abs(float(np.sum(weights)) - 1.0) > 1e-9:
            raise ArgumentError('mixture weights must sum to 1')

    @classmethod
    def parse(cls, text, n=1500, seed=0):
        """Parse `family[:index]`, e.g. `section5:1`."""
        family, _, index = str(text).partition(':')
        variant = 1
        if index:
            try:
                variant = int(index)
            except ValueError:
                raise ArgumentError(f"DGP index must be an integer: {text!r}")
        return cls(family=family, variant=variant, n=n, seed=seed)

    @property
    def label(self):
        if self.family in INDEXED_FAMILIES:
            return f'{self.family}:{self.variant}'
        return self.family


@dataclass
class LatentDraws:
    """
    Observed rows plus the latent potential treatments and outcomes.

    `d_potential[i, k]` is D_{z_k} for draw i and `y_potential[i, d, k]` is
    Y_{d z_k}; the observed (d, y) are these evaluated at the realized z.
    """

    z: np.ndarray
    d_potential: np.ndarray
    y_potential: np.ndarray
    treatment_support: tuple
    instrument_support: tuple
    ordered: bool = True
    response_types: Optional[np.ndarray] = None
    response_matrix: Optional[np.ndarray] = None
    z_probs: Optional[np.ndarray] = None

    @property
    def n(self):
        return len(self.z)

    @property
    def d(self):
        return self.d_potential[np.arange(self.n), self.z]

    @property
    def y(self):
        return self.y_potential[np.arange(self.n), self.d, self.z]


@dataclass
class OracleTruth:
    """Latent-truth quantities for one pair or one instrument value set."""

    valid_pairs: object
    pair: Optional[object] = None
    value_set: Optional[List[int]] = None
    beta: float = 0.0
    omega: List[float] = field(default_factory=list)
    valid: Optional[bool] = None
    effects: Dict = field(default_factory=dict)

    def to_dict(self, support=None):
        out = {
            'valid_pairs': [p.label(support) if support else (p.k, p.kprime) for p in self.valid_pairs],
            'beta': self.beta,
            'omega': list(self.omega),
            'valid': self.valid,
        }
        if self.pair is not None:
            out['pair'] = self.pair.label(support) if support else (self.pair.k, self.pair.kprime)
        if self.value_set is not None:
            out['value_set'] = list(self.value_set)
        return out


@dataclass
class SimulationReport:
    """Selection frequencies over a (DGP, τ, pair) grid."""

    dgps: List[str]
    n: int
    reps: int
    master_seed: int
    tau_grid: np.ndarray
    pair_labels: List[str]
    counts: np.ndarray  # (dgp, tau, pair) integer selection counts
    runtime: float = 0.0
    recommendation: Optional[float] = None
    valid_pairs: Dict[str, List[str]] = field(default_factory=dict)

    @property
    def frequencies(self):
        return self.counts / float(self.reps)

    def frequency(self, dgp, tau, pair_label):
        i = self.dgps.index(dgp)
        j = int(np.argmin(np.abs(self.tau_grid - tau)))
        if not np.isclose(self.tau_grid[j], tau):
            raise ArgumentError(f"tau {tau} is not on the report grid")
        return float(self.frequencies[i, j, self.pair_labels.index(pair_label)])

    def records(self):
        rows = []
        freq = self.frequencies
        for i, dgp in enumerate(self.dgps):
            for j, tau in enumerate(self.tau_grid):
                row = {'dgp': dgp, 'n': self.n, 'tau': float(tau)}
                for p, label in enumerate(self.pair_labels):
                    row[label] = float(freq[i, j, p])
                rows.append(row)
        return rows


def parse_grid(text: str) -> np.ndarray:
    """`start:stop:step` (inclusive stop) or a comma list."""
    text = str(text).strip()
    if ':' in text:
        try:
            start, stop, step = (float(part) for part in text.split(':'))
        except ValueError:
            raise ArgumentError(f"grid must be start:stop:step, got {text!r}")
        if step <= 0 or stop < start:
            raise ArgumentError(f"grid {text!r} is empty")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return np.round(start + step * np.arange(count), 10)
    try:
        values = np.array([float(part) for part in text.split(',') if part.strip()])
    except ValueError:
        raise ArgumentError(f"grid must be numbers separated by commas, got {text!r}")
    if values.size == 0:
        raise ArgumentError('grid is empty')
    return np.sort(values)


def grid_values(values: Sequence[float]) -> np.ndarray:
    grid = np.sort(np.asarray(list(values), dtype=np.float64))
    if grid.size == 0:
        raise ArgumentError('tau grid is empty')
    return grid
