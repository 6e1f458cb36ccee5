"""
Response-type models for unordered treatments.
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Tuple

import numpy as np

from src.errors import SchemaError
from src.models.dataset import PairId


class ResponseMatrix:
    """K × N_S matrix of treatment indices; column ξ is one response type."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] < 2 or matrix.shape[1] < 1:
            raise SchemaError('a response matrix needs at least two rows and one column')
        if not np.issubdtype(matrix.dtype, np.integer):
            raise SchemaError('response matrix entries must be treatment indices')
        columns = [tuple(col) for col in matrix.T]
        if len(set(columns)) != len(columns):
            raise SchemaError('response matrix columns must be distinct')
        self.matrix = matrix.astype(np.int64)

    @property
    def K(self):
        return self.matrix.shape[0]

    @property
    def n_types(self):
        return self.matrix.shape[1]

    def check_support(self, J):
        if self.matrix.min() < 0 or self.matrix.max() >= J:
            raise SchemaError(f"response matrix entries must index the {J} treatment values")

    def __repr__(self):
        return f'<ResponseMatrix K={self.K} types={self.n_types}>'


@dataclass
class PairResponse:
    pair: PairId
    kr: np.ndarray  # 2 × L
    B: Dict[int, np.ndarray]
    sigma_sets: Dict[Tuple[int, int], FrozenSet[Tuple[int, int]]]
    b: Dict[Tuple[int, int], np.ndarray]

    @property
    def L(self):
        return self.kr.shape[1]


@dataclass
class MomentStack:
    """
    Ŵ = (Ẑ_P, P̂_DZ(d_1), …, P̂_DZ(d_J), Q̂_YDZ(d_1), …, Q̂_YDZ(d_J)) and Σ̂_W.

    Every block has K entries; P̂_DZ(d)[k] = P̂(D = d, Z = z_k) and
    Q̂_YDZ(d)[k] = Ê[κ(Y)·1{D = d, Z = z_k}].
    """

    w: np.ndarray
    sigma_w: np.ndarray
    K: int
    J: int
    kappa: str = 'identity'
    notes: list = field(default_factory=list)

    @property
    def z_p(self):
        return self.w[:self.K]

    def p_dz(self, d):
        start = self.K * (1 + d)
        return self.w[start:start + self.K]

    def q_ydz(self, d):
        start = self.K * (1 + self.J + d)
        return self.w[start:start + self.K]

    def p_z_pair(self, pair, d):
        """(P̂(D=d | z_k), P̂(D=d | z_k')), zero for an empty group."""
        return self._conditional(self.p_dz(d), pair)

    def q_z_pair(self, pair, d):
        return self._conditional(self.q_ydz(d), pair)

    def _conditional(self, block, pair):
        out = np.zeros(2)
        for slot, k in enumerate((pair.k, pair.kprime)):
            if self.z_p[k] > 0:
                out[slot] = block[k] / self.z_p[k]
        return out


@dataclass
class MteEstimate:
    """
    β̂ over upper-triangle pairs × ordered treatment pairs (d ≠ d') × (t, t').

    `index[i]` is the (pair, d, d', t, t') key of `values[i]`; entries whose
    indicator fails are exactly 0.
    """

    values: np.ndarray
    index: list
    selected: object
    notes: list = field(default_factory=list)

    def value(self, pair, d, dprime, t, tprime):
        return float(self.values[self.index.index((pair, d, dprime, t, tprime))])

    def records(self, dataset=None):
        rows = []
        for (pair, d, dprime, t, tprime), value in zip(self.index, self.values):
            if dataset is not None:
                label = dataset.pair_labels(pair)
                d_label, dprime_label = dataset.treatment_support[d], dataset.treatment_support[dprime]
            else:
                label, d_label, dprime_label = f'({pair.k},{pair.kprime})', d, dprime
            rows.append({
                'pair': label,
                'd': d_label,
                'd_prime': dprime_label,
                't': t,
                't_prime': tprime,
                'beta': float(value),
            })
        return rows
