"""
Pairwise and partial-validity IV estimators.

This module provides the pairwise Wald/IV ratio β̂_(k,k'), the VSIV vector
over all K(K−1) pairs with its plug-in covariance, and the partial-validity
estimator θ̂₁ with its μ weights. Binary and ordered treatments share the
same code path.
"""

from typing import NamedTuple
import logging

import numpy as np
import pandas as pd

from src.config import Config
from src.errors import ArgumentError, StructuralError
from src.models.dataset import BOTH, PairId, PairSet
from src.models.estimation import GFunction, LateEstimate, PairDiagnostic, PartialEstimate

logger = logging.getLogger(__name__)


class IvRatio(NamedTuple):
    value: float
    numerator: float
    first_stage: float
    size: int
    degenerate: bool


def _g(dataset, g):
    if g is None:
        return GFunction.index(dataset.K)
    if not isinstance(g, GFunction):
        g = GFunction(g)
    if len(g) != dataset.K:
        raise ArgumentError(f"g has {len(g)} values for {dataset.K} instrument values")
    return g


def iv_ratio(dataset, values, g=None, tol=Config.FIRST_STAGE_TOL):
    """
    (E_n(gY) − E_n(g)E_n(Y)) / (E_n(gD) − E_n(g)E_n(D)) on Z in values.

    Empty subsamples and first stages below tol return 0 with the
    degenerate flag set.
    """
    g = _g(dataset, g)
    mask = np.isin(dataset.z, list(values))
    size = int(mask.sum())
    if size == 0:
        return IvRatio(0.0, 0.0, 0.0, 0, True)
    gz = g(dataset.z[mask])
    centered = gz - gz.mean()
    numerator = float(np.mean(centered * dataset.y[mask]))
    first_stage = float(np.mean(centered * dataset.treatment_values[mask]))
    if abs(first_stage) < tol:
        return IvRatio(0.0, numerator, first_stage, size, True)
    return IvRatio(numerator / first_stage, numerator, first_stage, size, False)


def beta_pair(dataset, pair, g=None):
    """Two-group IV ratio for (z_k, z_k'); 0 under a degenerate first stage."""
    ratio = iv_ratio(dataset, (pair.k, pair.kprime), g)
    if ratio.degenerate:
        logger.warning(f"Pair {dataset.pair_labels(pair)} has a degenerate first stage; beta set to 0")
    return ratio.value


# six moments per pair: (gY, Y, g, gD, D, 1)·1{Z in pair}, as M(g)·(Y, D, 1)
def _moment_map(gz):
    return np.array([
        [gz, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 0.0, gz],
        [0.0, gz, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ])


class _ZMoments:
    """Per-instrument-value first and second moments of u = (Y, D, 1)."""

    def __init__(self, dataset):
        n, K = dataset.n, dataset.K
        dvals = dataset.treatment_values
        u = np.column_stack((dataset.y, dvals, np.ones(n)))
        self.prob = np.bincount(dataset.z, minlength=K) / n
        self.first = np.zeros((K, 3))
        self.second = np.zeros((K, 3, 3))
        for z in range(K):
            rows = u[dataset.z == z]
            if len(rows):
                self.first[z] = rows.mean(axis=0)
                self.second[z] = rows.T @ rows / len(rows)


def _six_moments(zm, values, g):
    """E_n[W] for the value group, from per-z moments."""
    mean = np.zeros(6)
    for z in values:
        mean += zm.prob[z] * (_moment_map(g.values[z]) @ zm.first[z])
    return mean


def _cross_moment(zm, values_p, values_q, g):
    out = np.zeros((6, 6))
    for z in set(values_p) & set(values_q):
        M = _moment_map(g.values[z])
        out += zm.prob[z] * (M @ zm.second[z] @ M.T)
    return out


def ratio_gradient(x):
    """Gradient of f(x) = (x1/x6 − x2x3/x6²)/(x4/x6 − x5x3/x6²)."""
    x1, x2, x3, x4, x5, x6 = x
    den = x4 * x6 - x5 * x3
    num = x1 * x6 - x2 * x3
    return np.array([
        x6 / den,
        -x3 / den,
        (-x2 * x4 * x6 + x5 * x1 * x6) / den ** 2,
        -num * x6 / den ** 2,
        x3 * num / den ** 2,
        (-x1 * x5 * x3 + x2 * x3 * x4) / den ** 2,
    ])


def _delta_covariance(dataset, groups, g, active):
    """F′ Σ_W F′ᵀ over value groups; inactive groups get zero rows and columns."""
    zm = _ZMoments(dataset)
    size = len(groups)
    means = [_six_moments(zm, values, g) for values in groups]
    jac = np.zeros((size, 6 * size))
    for i, values in enumerate(groups):
        if active[i]:
            jac[i, 6 * i:6 * i + 6] = ratio_gradient(means[i])
    sigma_w = np.zeros((6 * size, 6 * size))
    for i in range(size):
        if not active[i]:
            continue
        for j in range(i, size):
            if not active[j]:
                continue
            block = _cross_moment(zm, groups[i], groups[j], g) - np.outer(means[i], means[j])
            sigma_w[6 * i:6 * i + 6, 6 * j:6 * j + 6] = block
            sigma_w[6 * j:6 * j + 6, 6 * i:6 * i + 6] = block.T
    sigma = jac @ sigma_w @ jac.T
    return (sigma + sigma.T) / 2.0


def sigma_hat(dataset, selected, g=None, universe=None):
    """
    Plug-in covariance of √n(β̂₁ − β₁) over the pair universe.

    Rows and columns of unselected pairs, and of pairs whose first stage is
    degenerate, are zero.
    """
    g = _g(dataset, g)
    universe = universe or PairSet.universe(dataset.K, BOTH)
    selected = set(selected)
    active = []
    for pair in universe:
        on = pair in selected
        if on and not g.injective_on(pair):
            logger.warning(f"g is not injective on pair {dataset.pair_labels(pair)}; block zeroed")
            on = False
        if on and iv_ratio(dataset, (pair.k, pair.kprime), g).degenerate:
            on = False
        active.append(on)
    groups = [(p.k, p.kprime) for p in universe]
    return _delta_covariance(dataset, groups, g, active)


def beta_vector(dataset, selected, g=None):
    """
    VSIV estimate over all K(K−1) pairs, ordered (1,2)…(1,K)…(K,1)…(K,K−1).

    Entries of unselected pairs are exactly 0.
    """
    g = _g(dataset, g)
    universe = PairSet.universe(dataset.K, BOTH)
    selected = selected if isinstance(selected, PairSet) else PairSet(selected)
    if not selected.issubset(universe):
        raise StructuralError('selected pairs must lie in the pair universe')
    beta = np.zeros(len(universe))
    diagnostics = {}
    for i, pair in enumerate(universe):
        ratio = iv_ratio(dataset, (pair.k, pair.kprime), g)
        chosen = pair in selected
        diagnostics[pair] = PairDiagnostic(ratio.first_stage, ratio.size, ratio.degenerate, chosen)
        if chosen:
            if ratio.degenerate:
                logger.warning(f"Selected pair {dataset.pair_labels(pair)} has a degenerate first stage")
            beta[i] = ratio.value
    sigma = sigma_hat(dataset, selected, g, universe)
    logger.info(f"Estimated {len(selected)} selected pair effects over {len(universe)} pairs")
    return LateEstimate(beta, sigma, PairSet(selected, BOTH), dataset.n, universe, diagnostics)


def mu_weights(dataset, value_set, g=None):
    """
    μ_m, m = 1…M−1, expressing θ₁ as Σ μ_m β_(k_m, k_{m+1}) along the chain.

    Returns an empty list when the set's first stage is degenerate.
    """
    g = _g(dataset, g)
    counts = np.array([np.count_nonzero(dataset.z == z) for z in value_set], dtype=np.float64)
    total = counts.sum()
    if total == 0 or np.any(counts == 0):
        return []
    share = counts / total
    dvals = dataset.treatment_values
    p = np.array([dvals[dataset.z == z].mean() for z in value_set])
    gv = g.values[list(value_set)]
    gbar = float(share @ gv)
    w = share * (gv - gbar)
    den = float(np.sum(w * p))
    if abs(den) < Config.FIRST_STAGE_TOL:
        return []
    tails = np.cumsum(w[::-1])[::-1]  # tails[l] = Σ_{i>=l} w_i
    return [float((p[m + 1] - p[m]) * tails[m + 1] / den) for m in range(len(value_set) - 1)]


def theta_partial(dataset, value_set, g=None):
    """
    θ̂₁: the IV ratio over Z in the validity value set, with μ weights and
    the delta-method variance of √n(θ̂₁ − θ₁).
    """
    g = _g(dataset, g)
    value_set = [int(v) for v in value_set]
    if len(set(value_set)) != len(value_set):
        raise ArgumentError('value set has repeated instrument values')
    if len(value_set) < 2:
        raise ArgumentError('a validity value set needs at least two instrument values')
    present = [v for v in value_set if np.any(dataset.z == v)]
    if len(present) < len(value_set):
        raise ArgumentError(f"instrument values {sorted(set(value_set) - set(present))} have no observations")
    ratio = iv_ratio(dataset, value_set, g)
    if ratio.degenerate:
        logger.warning(f"First stage over value set {value_set} is degenerate; theta set to 0")
        return PartialEstimate(0.0, 0.0, value_set, [], True)
    variance = float(_delta_covariance(dataset, [tuple(value_set)], g, [True])[0, 0])
    return PartialEstimate(ratio.value, variance, value_set, mu_weights(dataset, value_set, g))


def resolve_g(spec, dataset):
    """
    g from a text spec: `index` (dense index), `labels` (numeric instrument
    labels), `label=value,...` pairs, or a two-column CSV of label,value.
    """
    spec = (spec or 'index').strip()
    if spec == 'index':
        return GFunction.index(dataset.K)
    if spec == 'labels':
        try:
            return GFunction(np.asarray(dataset.instrument_support, dtype=np.float64))
        except (TypeError, ValueError):
            raise ArgumentError('g=labels needs numeric instrument labels')
    if '=' in spec:
        mapping = {}
        for item in spec.split(','):
            label, _, value = item.partition('=')
            try:
                mapping[label.strip()] = float(value)
            except ValueError:
                raise ArgumentError(f"bad g entry {item!r}; expected label=value")
        return GFunction.from_mapping(mapping, dataset.instrument_support)
    try:
        frame = pd.read_csv(spec, header=None, dtype=str, comment='#', skipinitialspace=True)
    except FileNotFoundError:
        raise ArgumentError(f"g must be index, labels, label=value pairs or a CSV path; got {spec!r}")
    mapping = {}
    for label, value in frame.itertuples(index=False, name=None):
        try:
            mapping[str(label).strip()] = float(value)
        except ValueError:
            continue
    return GFunction.from_mapping(mapping, dataset.instrument_support)
