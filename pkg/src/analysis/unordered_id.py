"""
Response-type identification for unordered treatments.

For a screened pair (z_k, z_k') the response matrix restricted to rows
k, k' gives, per treatment d, a binary matrix B_d. When B_d is lonesum its
pseudo-inverse turns the observed P(D = d | Z) and E[κ(Y)1{D = d} | Z]
into stratum probabilities and counterfactual means.
"""

from itertools import combinations, product
from typing import NamedTuple
import logging

import numpy as np

from src.config import Config
from src.errors import ArgumentError, SchemaError, StructuralError
from src.models.dataset import PairId, PairSet, UPPER
from src.models.unordered import MomentStack, MteEstimate, PairResponse, ResponseMatrix

logger = logging.getLogger(__name__)

STRATA = (1, 2)
STRATUM_PAIRS = ((1, 1), (1, 2), (2, 1), (2, 2))


class Counterfactual(NamedTuple):
    probability: float
    mean: float
    stratum: frozenset
    degenerate: bool
    lonesum: bool


def _response_matrix(R):
    return R if isinstance(R, ResponseMatrix) else ResponseMatrix(R)


def k_transform(R, pair, J=None):
    """
    Restrict R to rows (k, k') and keep the first occurrence of every column.

    Args:
        R (ResponseMatrix): K × N_S response matrix
        pair (PairId): k < k'
        J (int): number of treatment values; defaults to max(R) + 1

    Returns:
        PairResponse
    """
    R = _response_matrix(R)
    if pair.k >= pair.kprime:
        raise StructuralError(f"unordered pairs are taken with k < k', got {pair!r}")
    if pair.kprime >= R.K:
        raise StructuralError(f"pair {pair!r} is outside the {R.K} rows of the response matrix")
    J = int(R.matrix.max()) + 1 if J is None else J
    rows = R.matrix[[pair.k, pair.kprime]]
    seen = {}
    for l, column in enumerate(map(tuple, rows.T)):
        seen.setdefault(column, l)
    kr = rows[:, sorted(seen.values())]

    B, sigma_sets, b = {}, {}, {}
    for d in range(J):
        B[d] = (kr == d).astype(np.int64)
        counts = B[d].sum(axis=0)
        for t in (0, 1, 2):
            b[(d, t)] = (counts == t).astype(np.int64)
            sigma_sets[(d, t)] = frozenset(tuple(int(v) for v in kr[:, l]) for l in np.flatnonzero(counts == t))
    return PairResponse(pair, kr, B, sigma_sets, b)


def is_lonesum(B):
    """
    True iff no 2 × 2 submatrix of B is [[1,0],[0,1]] or [[0,1],[1,0]].

    For two rows: one row's support contains the other's.
    """
    B = np.asarray(B)
    if B.size and not np.isin(B, (0, 1)).all():
        raise ArgumentError('is_lonesum expects a binary matrix')
    for i, j in combinations(range(B.shape[0]), 2):
        above = np.any((B[i] == 1) & (B[j] == 0))
        below = np.any((B[i] == 0) & (B[j] == 1))
        if above and below:
            return False
    return True


def pinv_binary(B):
    """
    Moore–Penrose pseudo-inverse of a binary 2 × L matrix.

    Lonesum matrices factor as B = C·D, where C holds the distinct nonzero
    columns (one per column sum t) and D the rows b(t) marking where they
    occur; then B⁺ = Dᵀ(DDᵀ)⁻¹(CᵀC)⁻¹Cᵀ. Anything else goes to np.linalg.pinv.
    """
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2:
        raise ArgumentError('pinv_binary expects a two-dimensional matrix')
    if not B.any():
        return np.zeros(B.T.shape)
    if not is_lonesum(B):
        return np.linalg.pinv(B)

    sums = B.sum(axis=0)
    C, D = [], []
    for t in np.unique(sums[sums > 0]):
        columns = B[:, sums == t]
        if not (columns == columns[:, :1]).all():
            return np.linalg.pinv(B)
        C.append(columns[:, 0])
        D.append((sums == t).astype(np.float64))
    C = np.column_stack(C)
    D = np.vstack(D)
    return D.T @ np.linalg.inv(D @ D.T) @ np.linalg.inv(C.T @ C) @ C.T


def _kappa(kappa):
    if kappa is None or kappa == 'identity':
        return 'identity', lambda y: y
    if callable(kappa):
        return getattr(kappa, '__name__', 'custom'), kappa
    raise ArgumentError(f"unknown outcome transform {kappa!r}")


def moment_stack(dataset, kappa=None):
    """
    Ŵ = (Ẑ_P, P̂_DZ(d₁…d_J), Q̂_YDZ(d₁…d_J)) and its plug-in covariance.

    Every row contributes W_i = (1{Z_i = z_k}, 1{D_i = d, Z_i = z_k},
    κ(Y_i)1{D_i = d, Z_i = z_k}); Σ̂_W is the 1/n sample covariance.
    """
    name, fn = _kappa(kappa)
    K, J, n = dataset.K, dataset.J, dataset.n
    ky = np.asarray(fn(dataset.y), dtype=np.float64)
    if ky.shape != dataset.y.shape:
        raise ArgumentError('the outcome transform must map each outcome to one real value')
    zone = np.zeros((n, K))
    zone[np.arange(n), dataset.z] = 1.0
    cells = np.zeros((n, J, K))
    cells[np.arange(n), dataset.d, dataset.z] = 1.0
    cells = cells.reshape(n, J * K)
    W = np.hstack((zone, cells, cells * ky[:, None]))
    w = W.mean(axis=0)
    centered = W - w
    sigma_w = centered.T @ centered / n
    stack = MomentStack(w, (sigma_w + sigma_w.T) / 2.0, K, J, name)
    logger.debug(f"Moment stack over {n} rows: {w.size} moments, kappa={name}")
    return stack


def counterfactuals(dataset, pair, R, d, t, kappa=None, stack=None, response=None,
                    tol=Config.FIRST_STAGE_TOL):
    """
    P(stratum Σ_d(t)) = b_d(t)B_d⁺P_Z(d) and E[κ(Y_d) | Σ_d(t)] as the ratio
    of the Q- and P-contractions.

    A stratum probability at or below tol flags the stratum as degenerate
    and leaves the mean undefined (nan). A non-lonesum B_d is structurally
    inconsistent with a valid pair: the result is zero with lonesum=False.
    """
    if t not in STRATA:
        raise ArgumentError(f"stratum index t must be 1 or 2, got {t}")
    if not 0 <= d < dataset.J:
        raise ArgumentError(f"treatment index {d} is outside the {dataset.J} treatment values")
    response = response or k_transform(R, pair, dataset.J)
    stack = stack or moment_stack(dataset, kappa)
    stratum = response.sigma_sets[(d, t)]
    B = response.B[d]
    if not is_lonesum(B):
        logger.warning(f"B_{d} of pair {dataset.pair_labels(pair)} is not lonesum; "
                       f"counterfactuals set to 0")
        return Counterfactual(0.0, 0.0, stratum, True, False)

    contraction = response.b[(d, t)] @ pinv_binary(B)
    probability = float(contraction @ stack.p_z_pair(pair, d))
    if probability <= tol:
        if stratum:
            logger.warning(f"Stratum ({d}, {t}) of pair {dataset.pair_labels(pair)} has "
                           f"probability {probability:.3g}; mean undefined")
        return Counterfactual(probability, float('nan'), stratum, True, True)
    mean = float(contraction @ stack.q_z_pair(pair, d)) / probability
    return Counterfactual(probability, mean, stratum, False, True)


def mte_index(K, J, pairs=None):
    """(pair, d, d', t, t') keys in vector order: pairs k < k', then d ≠ d', then (t, t')."""
    pairs = PairSet.universe(K, UPPER) if pairs is None else pairs
    return [(pair, d, dprime, t, tprime)
            for pair in pairs
            for d, dprime in product(range(J), repeat=2) if d != dprime
            for t, tprime in STRATUM_PAIRS]


def mte_unordered(dataset, selected, R, pairs_of_interest=None, kappa=None):
    """
    β̂_(k,k')(d, d', t, t'): mean effect of d relative to d' on the stratum
    Σ_d(t) = Σ_d'(t').

    An entry is non-zero only when the pair is selected, both strata are
    the same non-empty set of response types and both stratum probabilities
    are positive.

    Returns:
        MteEstimate
    """
    R = _response_matrix(R)
    if R.K != dataset.K:
        raise SchemaError(f"response matrix has {R.K} rows for {dataset.K} instrument values")
    R.check_support(dataset.J)
    selected = selected if isinstance(selected, PairSet) else PairSet(selected, UPPER)
    universe = PairSet.universe(dataset.K, UPPER)
    if pairs_of_interest is None:
        pairs = universe
    else:
        pairs = PairSet((PairId(min(p.k, p.kprime), max(p.k, p.kprime))
                         for p in (q if isinstance(q, PairId) else PairId(*q) for q in pairs_of_interest)), UPPER)
        if not pairs.issubset(universe):
            raise StructuralError('pairs of interest must lie among the instrument values')

    stack = moment_stack(dataset, kappa)
    index = mte_index(dataset.K, dataset.J, pairs)
    values = np.zeros(len(index))
    notes = []
    cache = {}

    def effect(pair, response, d, t):
        key = (pair, d, t)
        if key not in cache:
            cache[key] = counterfactuals(dataset, pair, R, d, t, stack=stack, response=response)
        return cache[key]

    for pair in pairs:
        chosen = pair in selected or pair.reversed() in selected
        if not chosen:
            continue
        response = k_transform(R, pair, dataset.J)
        broken = [d for d in range(dataset.J) if not is_lonesum(response.B[d])]
        if broken:
            notes.append(f"pair {dataset.pair_labels(pair)}: B_d not lonesum for d in {broken}; "
                         f"structurally inconsistent with validity, effects set to 0")
            logger.warning(notes[-1])
            continue
        for i, (p, d, dprime, t, tprime) in enumerate(index):
            if p != pair:
                continue
            stratum = response.sigma_sets[(d, t)]
            if not stratum or stratum != response.sigma_sets[(dprime, tprime)]:
                continue
            first, second = effect(pair, response, d, t), effect(pair, response, dprime, tprime)
            if first.degenerate or second.degenerate:
                continue
            values[i] = first.mean - second.mean

    logger.info(f"Unordered effects: {np.count_nonzero(values)} identified entries over {len(pairs)} pairs")
    return MteEstimate(values, index, selected, notes)
