"""
Estimation and inference models.

This module contains the instrument transform g, the pairwise LATE vector
with its plug-in covariance, the partial-validity estimate and the Wald
hypothesis/test result types.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.errors import ArgumentError, SchemaError
from src.models.dataset import PairId, PairSet


class GFunction:
    """Real-valued map over instrument indices."""

    def __init__(self, values: Sequence[float]):
        values = np.asarray(values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(values)):
            raise ArgumentError('g must take finite values')
        self.values = values

    @classmethod
    def index(cls, K):
        """Default g(z) = dense index of z."""
        return cls(np.arange(K, dtype=np.float64))

    @classmethod
    def from_mapping(cls, mapping, instrument_support):
        """Build from {instrument label: value}; every label must be covered."""
        values = []
        for label in instrument_support:
            key = label if label in mapping else str(label)
            if key not in mapping:
                raise SchemaError(f"g table has no value for instrument value {label!r}")
            values.append(float(mapping[key]))
        return cls(values)

    def __call__(self, z):
        return self.values[z]

    def __len__(self):
        return len(self.values)

    def injective_on(self, pair: PairId):
        return self.values[pair.k] != self.values[pair.kprime]

    def __repr__(self):
        return f'<GFunction {self.values.tolist()}>'


@dataclass
class PairDiagnostic:
    first_stage: float
    subsample_size: int
    degenerate: bool = False
    selected: bool = False


@dataclass
class LateEstimate:
    beta: np.ndarray
    sigma: np.ndarray
    selected: PairSet
    n: int
    universe: PairSet
    diagnostics: Dict[PairId, PairDiagnostic] = field(default_factory=dict)

    def index_of(self, pair):
        for i, candidate in enumerate(self.universe):
            if candidate == pair:
                return i
        raise ArgumentError(f"pair {pair!r} is outside the estimate's pair universe")

    def standard_errors(self):
        """Standard errors of β̂ (sigma is the covariance of √n(β̂ − β))."""
        return np.sqrt(np.clip(np.diag(self.sigma), 0.0, None) / self.n)

    def records(self, dataset=None):
        se = self.standard_errors()
        rows = []
        for i, pair in enumerate(self.universe):
            diag = self.diagnostics.get(pair)
            rows.append({
                'pair': dataset.pair_labels(pair) if dataset is not None else f'({pair.k},{pair.kprime})',
                'selected': pair in self.selected,
                'beta': float(self.beta[i]),
                'se': float(se[i]),
                'first_stage': diag.first_stage if diag else 0.0,
                'subsample_size': diag.subsample_size if diag else 0,
                'degenerate': diag.degenerate if diag else False,
            })
        return rows


@dataclass
class PartialEstimate:
    theta1: float
    variance: float
    value_set: List[int]
    weights: List[float]
    degenerate: bool = False

    def to_dict(self):
        return {
            'theta1': self.theta1,
            'variance': self.variance,
            'value_set': list(self.value_set),
            'weights': list(self.weights),
            'degenerate': self.degenerate,
        }


@dataclass
class Hypothesis:
    """
    R(β_S) = A·β_S − b = 0 over the S listed pairs.

    A smooth nonlinear restriction is given by `evaluator` (β_S ↦ R) and
    `jacobian` (β_S ↦ R′); A and b are then ignored.
    """

    pairs: List[PairId]
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    evaluator: Optional[Callable] = None
    jacobian: Optional[Callable] = None

    def __post_init__(self):
        self.pairs = [p if isinstance(p, PairId) else PairId(*p) for p in self.pairs]
        if not self.pairs:
            raise ArgumentError('a hypothesis needs at least one pair')
        if self.evaluator is not None or self.jacobian is not None:
            if self.evaluator is None or self.jacobian is None:
                raise ArgumentError('a nonlinear restriction needs both an evaluator and a Jacobian')
            return
        if self.A is None:
            raise ArgumentError('a linear restriction needs a matrix A')
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.zeros(A.shape[0]) if self.b is None else np.asarray(self.b, dtype=np.float64).ravel()
        if A.shape[1] != len(self.pairs):
            raise ArgumentError(f"A has {A.shape[1]} columns for {len(self.pairs)} pairs")
        if b.shape[0] != A.shape[0]:
            raise ArgumentError(f"b has {b.shape[0]} entries for {A.shape[0]} restrictions")
        if A.shape[0] > A.shape[1] or np.linalg.matrix_rank(A, tol=1e-10) < A.shape[0]:
            raise ArgumentError('A must have full row rank r <= S')
        self.A, self.b = A, b

    def restriction(self, beta_s):
        if self.evaluator is not None:
            return np.atleast_1d(np.asarray(self.evaluator(beta_s), dtype=np.float64))
        return self.A @ beta_s - self.b

    def restriction_jacobian(self, beta_s):
        if self.jacobian is not None:
            return np.atleast_2d(np.asarray(self.jacobian(beta_s), dtype=np.float64))
        return self.A


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    ts1: int
    ts2: float
    critical: float
    alpha: float
    r: int

    @property
    def reject(self):
        return self.ts1 == 0 or self.ts2 > self.critical

    def to_dict(self):
        return {
            'ts1': self.ts1,
            'ts2': self.ts2,
            'critical': self.critical,
            'alpha': self.alpha,
            'r': self.r,
            'reject': self.reject,
        }
