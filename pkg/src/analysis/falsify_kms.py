"""
Supremum-type falsification statistics.

This module provides φ̂, σ̂² and the per-pair statistic
√T_n·|sup_h φ̂(h,g)/(ξ0 ∨ σ̂(h,g))| for binary, ordered and unordered
treatments, plus a row-scanning oracle used to check the prefix-count kernel.

Every ratio is evaluated by `normalized_contrast` from integer cell counts,
so the kernel and the oracle agree to the last bit.
"""

from itertools import product
import logging

import numpy as np

from src.config import Config, EndpointPolicy
from src.errors import ArgumentError, GuardError, StructuralError
from src.models.falsification import ABS_SUP, INTERVAL, POS_PART, THRESHOLD, HFunction, SupStatistic
from src.utils.rng import stream

logger = logging.getLogger(__name__)

MODES = ('binary', 'ordered', 'unordered')
_CHUNK_ELEMENTS = 1 << 21


def _group_terms(count, size):
    if size == 0:
        return 0.0 * count, 0.0 * count
    return count / size, count * (size - count) / (size * size * size)


def normalized_contrast(c1, c2, n1, n2, t_n, xi0, sign):
    """
    φ̂/(ξ0 ∨ σ̂) from counts.

    c1, c2 are the unsigned masses of h in the z_k and z_k' groups (floats or
    float arrays), n1, n2 the group sizes. Since h = ±indicator, h² has the
    unsigned mass, and σ̂² = T_n·Σ_g c_g(n_g − c_g)/n_g³.
    """
    m1, v1 = _group_terms(c1, n1)
    m2, v2 = _group_terms(c2, n2)
    phi = sign * (m2 - m1)
    var = t_n * (v2 + v1)
    return phi / np.maximum(xi0, np.sqrt(var))


def _check_pair(tables, pair):
    if tables.K < 2:
        raise StructuralError('falsification needs at least two instrument values')
    if pair.k >= tables.K or pair.kprime >= tables.K:
        raise StructuralError(f"pair {pair!r} is outside the {tables.K} instrument values")


def _h_counts(tables, h, pair):
    if h.kind == THRESHOLD:
        c1 = tables.cell_counts[:h.arm + 1, pair.k].sum()
        c2 = tables.cell_counts[:h.arm + 1, pair.kprime].sum()
    else:
        c1 = tables.cell(h.arm, pair.k).count_closed(h.a, h.b)
        c2 = tables.cell(h.arm, pair.kprime).count_closed(h.a, h.b)
    return float(c1), float(c2)


def phi_hat(tables, h, pair):
    """φ̂(h, g) = P̂(h·g₂)/P̂(g₂) − P̂(h·g₁)/P̂(g₁) with g = (1{z_k}, 1{z_k'})."""
    _check_pair(tables, pair)
    c1, c2 = _h_counts(tables, h, pair)
    n1, n2 = float(tables.z_counts[pair.k]), float(tables.z_counts[pair.kprime])
    m1, _ = _group_terms(c1, n1)
    m2, _ = _group_terms(c2, n2)
    return float(h.sign * (m2 - m1))


def sigma_hat_sq(tables, h, pair):
    """σ̂²(h, g); zero when h has no mass in either group."""
    _check_pair(tables, pair)
    c1, c2 = _h_counts(tables, h, pair)
    n1, n2 = float(tables.z_counts[pair.k]), float(tables.z_counts[pair.kprime])
    _, v1 = _group_terms(c1, n1)
    _, v2 = _group_terms(c2, n2)
    return float(tables.t_n() * (v2 + v1))


def resolve_endpoints(dataset, policy=None):
    """Sorted distinct endpoint values for the interval class."""
    policy = policy or EndpointPolicy()
    if policy.kind == 'all':
        return dataset.tables.grid
    if policy.m >= dataset.n:
        return dataset.tables.grid
    rng = stream(policy.seed)
    rows = rng.choice(dataset.n, size=policy.m, replace=False)
    return np.unique(dataset.y[rows])


def _interval_sup(cell1, cell2, endpoints, n1, n2, t_n, xi0, sign):
    """Best ratio over [E_i, E_j], i <= j, scanned left index first; first maximum wins."""
    m = len(endpoints)
    le1, lt1 = cell1.count_le(endpoints), cell1.count_lt(endpoints)
    le2, lt2 = cell2.count_le(endpoints), cell2.count_lt(endpoints)
    right = np.arange(m)
    rows = max(1, _CHUNK_ELEMENTS // max(m, 1))
    best, best_ij = -np.inf, None
    for start in range(0, m, rows):
        stop = min(m, start + rows)
        c1 = (le1[None, :] - lt1[start:stop, None]).astype(np.float64)
        c2 = (le2[None, :] - lt2[start:stop, None]).astype(np.float64)
        # reversed endpoints give negative counts
        reversed_ = right[None, :] < np.arange(start, stop)[:, None]
        c1[reversed_] = 0.0
        c2[reversed_] = 0.0
        ratio = normalized_contrast(c1, c2, n1, n2, t_n, xi0, sign)
        ratio[reversed_] = -np.inf
        flat = int(np.argmax(ratio))
        value = ratio.flat[flat]
        if value > best:
            best, best_ij = float(value), (start + flat // m, flat % m)
    return best, best_ij


def _threshold_sup(tables, pair, n1, n2, t_n, xi0):
    best, best_arm = -np.inf, None
    cum1 = np.cumsum(tables.cell_counts[:, pair.k])
    cum2 = np.cumsum(tables.cell_counts[:, pair.kprime])
    for j in range(tables.J - 1):
        value = float(normalized_contrast(float(cum1[j]), float(cum2[j]), n1, n2, t_n, xi0, 1))
        if value > best:
            best, best_arm = value, j
    return best, best_arm


def _arm_candidates(J, mode):
    """(arm, sign) blocks scanned for binary/ordered treatments, in scan order."""
    if mode == 'binary' and J != 2:
        raise StructuralError(f"binary mode needs exactly two treatment values, got {J}")
    return [(0, 1), (J - 1, -1)]


def _finish(pair, raw, witness, variant, t_n, mode, degenerate):
    if variant == ABS_SUP:
        value = float(np.sqrt(t_n) * abs(raw))
    elif variant == POS_PART:
        value = float(np.sqrt(t_n) * max(raw, 0.0))
    else:
        raise ArgumentError(f"unknown statistic variant {variant!r}")
    return SupStatistic(pair, value, float(raw), witness, variant, t_n, mode, degenerate)


def signed_arm_sups(tables, pair, endpoints, xi0=Config.XI0):
    """
    Per-arm interval sups with sign +1 and −1.

    Returns:
        dict: {(arm, sign): (best ratio, HFunction witness)}
    """
    n1, n2 = float(tables.z_counts[pair.k]), float(tables.z_counts[pair.kprime])
    t_n = tables.t_n()
    out = {}
    for arm in range(tables.J):
        for sign in (1, -1):
            value, ij = _interval_sup(tables.cell(arm, pair.k), tables.cell(arm, pair.kprime),
                                      endpoints, n1, n2, t_n, xi0, sign)
            witness = None
            if ij is not None:
                witness = HFunction(INTERVAL, arm, sign, float(endpoints[ij[0]]), float(endpoints[ij[1]]))
            out[(arm, sign)] = (value, witness)
    return out


def _unordered_reduce(arm_sups, J):
    """min over sign patterns q of max over arms of the q-signed sup."""
    best, best_witness = np.inf, None
    for pattern in product((1, -1), repeat=J):
        top, top_witness = -np.inf, None
        for arm, sign in enumerate(pattern):
            value, witness = arm_sups[(arm, sign)]
            if value > top:
                top, top_witness = value, witness
        if top < best:
            best, best_witness = top, top_witness
    return best, best_witness


def sup_stat_pair(dataset, pair, endpoint_policy=None, variant=ABS_SUP, treatment_mode='binary',
                  xi0=Config.XI0, endpoints=None):
    """
    Falsification statistic of one ordered instrument pair.

    Args:
        dataset (Dataset): observations (its group tables are reused)
        pair (PairId): (z_k, z_k'), g₁ = 1{z_k}, g₂ = 1{z_k'}
        endpoint_policy (EndpointPolicy): `all` or `subsample`; ignored when endpoints is given
        variant (str): 'abs-sup' or 'pos-part'
        treatment_mode (str): 'binary', 'ordered' or 'unordered'
        xi0 (float): floor on σ̂
        endpoints (ndarray): precomputed sorted endpoint set shared across pairs

    Returns:
        SupStatistic
    """
    if treatment_mode not in MODES:
        raise ArgumentError(f"unknown treatment mode {treatment_mode!r}")
    tables = dataset.tables
    _check_pair(tables, pair)
    if endpoints is None:
        endpoints = resolve_endpoints(dataset, endpoint_policy)
    n1, n2 = float(tables.z_counts[pair.k]), float(tables.z_counts[pair.kprime])
    t_n = tables.t_n()
    degenerate = n1 == 0 or n2 == 0
    if degenerate:
        logger.warning(f"Pair {pair!r} has an empty instrument group; statistic uses the zero convention")

    if treatment_mode == 'unordered':
        raw, witness = _unordered_reduce(signed_arm_sups(tables, pair, endpoints, xi0), tables.J)
        return _finish(pair, raw, witness, variant, t_n, treatment_mode, degenerate)

    best, witness = -np.inf, None
    for arm, sign in _arm_candidates(tables.J, treatment_mode):
        value, ij = _interval_sup(tables.cell(arm, pair.k), tables.cell(arm, pair.kprime),
                                  endpoints, n1, n2, t_n, xi0, sign)
        if value > best:
            best = value
            witness = HFunction(INTERVAL, arm, sign, float(endpoints[ij[0]]), float(endpoints[ij[1]]))
    if treatment_mode == 'ordered':
        value, arm = _threshold_sup(tables, pair, n1, n2, t_n, xi0)
        if value > best:
            best, witness = value, HFunction(THRESHOLD, arm, 1)
    logger.debug(f"Pair {pair!r}: raw sup {best:.6g} over {len(endpoints)} endpoints")
    return _finish(pair, best, witness, variant, t_n, treatment_mode, degenerate)


def _row_counts(dataset, h, k):
    in_group = dataset.z == k
    if h.kind == THRESHOLD:
        return float(np.count_nonzero(in_group & (dataset.d <= h.arm)))
    hit = in_group & (dataset.d == h.arm) & (dataset.y >= h.a) & (dataset.y <= h.b)
    return float(np.count_nonzero(hit))


def brute_force_sup(dataset, pair, endpoint_policy=None, variant=ABS_SUP, treatment_mode='binary',
                    xi0=Config.XI0, endpoints=None, max_n=Config.BRUTE_FORCE_MAX_N):
    """Enumerate every interval and arm directly from rows; no prefix counts."""
    if dataset.n > max_n:
        raise GuardError(f"brute force is limited to n <= {max_n}, got {dataset.n}")
    if treatment_mode not in MODES:
        raise ArgumentError(f"unknown treatment mode {treatment_mode!r}")
    if pair.k >= dataset.K or pair.kprime >= dataset.K:
        raise StructuralError(f"pair {pair!r} is outside the {dataset.K} instrument values")
    if endpoints is None:
        endpoints = resolve_endpoints(dataset, endpoint_policy)
    endpoints = [float(e) for e in endpoints]
    n1 = float(np.count_nonzero(dataset.z == pair.k))
    n2 = float(np.count_nonzero(dataset.z == pair.kprime))
    t_n = float(dataset.n)
    for k in range(dataset.K):
        t_n *= int(np.count_nonzero(dataset.z == k)) / dataset.n
    degenerate = n1 == 0 or n2 == 0

    def scan(arm, sign):
        best, witness = -np.inf, None
        for i, a in enumerate(endpoints):
            for b in endpoints[i:]:
                h = HFunction(INTERVAL, arm, sign, a, b)
                value = float(normalized_contrast(_row_counts(dataset, h, pair.k),
                                                  _row_counts(dataset, h, pair.kprime),
                                                  n1, n2, t_n, xi0, sign))
                if value > best:
                    best, witness = value, h
        return best, witness

    if treatment_mode == 'unordered':
        arm_sups = {(arm, sign): scan(arm, sign) for arm in range(dataset.J) for sign in (1, -1)}
        raw, witness = _unordered_reduce(arm_sups, dataset.J)
        return _finish(pair, raw, witness, variant, t_n, treatment_mode, degenerate)

    best, witness = -np.inf, None
    for arm, sign in _arm_candidates(dataset.J, treatment_mode):
        value, h = scan(arm, sign)
        if value > best:
            best, witness = value, h
    if treatment_mode == 'ordered':
        for j in range(dataset.J - 1):
            h = HFunction(THRESHOLD, j, 1)
            value = float(normalized_contrast(_row_counts(dataset, h, pair.k),
                                              _row_counts(dataset, h, pair.kprime),
                                              n1, n2, t_n, xi0, 1))
            if value > best:
                best, witness = value, h
    return _finish(pair, best, witness, variant, t_n, treatment_mode, degenerate)


def witness_ratio(dataset, stat, xi0=Config.XI0):
    """Re-evaluate a statistic's witness; equals stat.raw_sup."""
    tables = dataset.tables
    h = stat.witness
    c1, c2 = _h_counts(tables, h, stat.pair)
    n1, n2 = float(tables.z_counts[stat.pair.k]), float(tables.z_counts[stat.pair.kprime])
    return float(normalized_contrast(c1, c2, n1, n2, tables.t_n(), xi0, h.sign))
