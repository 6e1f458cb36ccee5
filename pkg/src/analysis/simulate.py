"""
Data-generating processes, latent-truth oracles and Monte Carlo selection
tables.

Every draw keeps the latent potential treatments and outcomes next to the
observed rows, so oracles are brute-force expectations over the same draw.
Replications are seeded from (master_seed, dgp, rep) and counted with
integers; the table does not depend on how workers are scheduled.
"""

import logging
import time

import numpy as np
from joblib import Parallel, delayed

from src.analysis.falsify_km import psi_reports, quantile_partitions
from src.analysis.falsify_kms import sup_stat_pair
from src.analysis.unordered_id import k_transform, mte_index
from src.config import Config
from src.errors import ArgumentError, StructuralError, UnsupportedModeError
from src.models.dataset import BOTH, UPPER, ComponentTable, Dataset, PairId, PairSet
from src.models.falsification import ABS_SUP
from src.models.simulation import DgpSpec, LatentDraws, OracleTruth, SimulationReport, grid_values
from src.models.unordered import ResponseMatrix
from src.utils.rng import normals, stream, uniforms

logger = logging.getLogger(__name__)

MIXTURE_WEIGHTS = (0.15, 0.2, 0.3, 0.2, 0.15)

SECTION5_Z_PROBS = (0.35, 0.35, 0.3)
SECTION5_D_PROBS = (0.5, 0.5, 0.5)
SECTION5_NOISE = {
    1: {'mean': -0.7, 'sd': 1.0},
    2: {'mean': 0.0, 'sd': 1.675},
    3: {'mean': 0.0, 'sd': 0.515},
    4: {'means': (-1.0, -0.5, 0.0, 0.5, 1.0), 'sd': 0.125, 'weights': MIXTURE_WEIGHTS},
}

QOB_Z_PROBS = (0.2418, 0.2356, 0.2666, 0.2560)
QOB_D_PROBS = (0.5104, 0.5187, 0.5203, 0.5295)
QOB_NOISE = {
    1: {'mean': -0.07, 'sd': 1.0},
    2: {'mean': 0.0, 'sd': 1.0675},
    3: {'mean': 0.0, 'sd': 0.9325},
    4: {'means': (-0.1, -0.05, 0.0, 0.05, 0.1), 'sd': 0.925, 'weights': MIXTURE_WEIGHTS},
}

# columns: never, always-1, always-2, 0 -> 1 at z_1, 0 -> 2 at z_2
UNORDERED_RESPONSE = np.array([
    [0, 1, 2, 0, 0],
    [0, 1, 2, 1, 0],
    [0, 1, 2, 1, 2],
])
UNORDERED_TYPE_PROBS = (0.3, 0.15, 0.15, 0.2, 0.2)
UNORDERED_TYPE_MEANS = np.array([
    [0.0, 0.5, 1.0],
    [0.2, 0.8, 1.1],
    [-0.2, 0.3, 1.5],
    [0.1, 1.1, 0.9],
    [0.0, 0.4, 2.0],
])


def _probabilities(values, name, size=None):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or (size is not None and len(values) != size):
        raise ArgumentError(f"{name} must be a vector of length {size}")
    if np.any(values < 0) or abs(values.sum() - 1.0) > 1e-9:
        raise ArgumentError(f"{name} must be non-negative and sum to 1")
    return values


def _assign(u, z_probs):
    """Category k when cum_{k-1} < u <= cum_k."""
    cuts = np.cumsum(z_probs)[:-1]
    return np.searchsorted(cuts, u, side='left').astype(np.int64)


def _noise(rng, n, spec):
    """A contaminated outcome draw: normal, or a normal mixture keyed by a fresh uniform."""
    if 'means' in spec:
        weights = _probabilities(spec.get('weights', MIXTURE_WEIGHTS), 'mixture weights', len(spec['means']))
        component = _assign(uniforms(rng, n), weights)
        return np.asarray(spec['means'], dtype=np.float64)[component] + spec['sd'] * normals(rng, n)
    return normals(rng, n, spec.get('mean', 0.0), spec.get('sd', 1.0))


def _binary_design(rng, n, z_probs, d_probs, contaminated, noise, effect, z_labels, coding=None):
    """Z from U, D_z = 1{V <= p_z}, Y_dz = N_Z + effect·d except the contaminated (1, z) cell."""
    z_probs = _probabilities(z_probs, 'z_probs')
    d_probs = np.asarray(d_probs, dtype=np.float64)
    K = len(z_probs)
    if d_probs.shape != (K,):
        raise ArgumentError(f"d_probs must give one probability per instrument value ({K})")
    u, v = uniforms(rng, n), uniforms(rng, n)
    z = coding(u) if coding else _assign(u, z_probs)
    d_potential = (v[:, None] <= d_probs[None, :]).astype(np.int64)
    base = normals(rng, n)
    y_potential = base[:, None, None] + np.zeros((1, 2, K))
    y_potential[:, 1, :] += effect
    if contaminated is not None:
        if not 0 <= contaminated < K:
            raise ArgumentError(f"contaminated instrument index {contaminated} is outside 0..{K - 1}")
        y_potential[:, 1, contaminated] = _noise(rng, n, noise) + effect
    return LatentDraws(z, d_potential, y_potential, (0, 1), tuple(z_labels), True, z_probs=z_probs)


def _section5_coding(u):
    return (2 * (u <= 0.3) + ((u > 0.3) & (u <= 0.65))).astype(np.int64)


def _section5(spec, rng, n):
    return _binary_design(rng, n, SECTION5_Z_PROBS, SECTION5_D_PROBS, 0, SECTION5_NOISE[spec.variant],
                          0.0, (0, 1, 2), coding=_section5_coding)


def _qob(spec, rng, n):
    params = spec.params
    z_probs = params.get('z_probs', QOB_Z_PROBS)
    labels = params.get('z_labels', tuple(range(1, len(z_probs) + 1)))
    return _binary_design(rng, n, z_probs, params.get('d_probs', QOB_D_PROBS), params.get('contaminated', 1),
                          QOB_NOISE[spec.variant], 0.0, labels)


def _custom(spec, rng, n):
    params = spec.params
    z_probs = params.get('z_probs', (0.5, 0.5))
    d_probs = params.get('d_probs', (0.5,) * len(z_probs))
    labels = params.get('z_labels', tuple(range(len(z_probs))))
    return _binary_design(rng, n, z_probs, d_probs, params.get('contaminated'),
                          params.get('contamination', {'mean': 0.0, 'sd': 1.0}),
                          float(params.get('effect', 0.0)), labels)


def _ordered(spec, rng, n):
    """D_z = Σ_j 1{V <= p_{z,j}}, Y_dz = N + effect·d (+ shift on a contaminated (d, z) cell)."""
    params = spec.params
    thresholds = np.asarray(params.get('thresholds', ((0.5, 0.2), (0.6, 0.3), (0.7, 0.4))), dtype=np.float64)
    if thresholds.ndim != 2 or np.any((thresholds < 0) | (thresholds > 1)):
        raise ArgumentError('ordered thresholds must be a K × (J−1) matrix of probabilities')
    if np.any(np.diff(thresholds, axis=1) > 0):
        raise ArgumentError('ordered thresholds must be non-increasing in the treatment level')
    K, J = thresholds.shape[0], thresholds.shape[1] + 1
    z_probs = _probabilities(params.get('z_probs', np.full(K, 1.0 / K)), 'z_probs', K)
    effect = float(params.get('effect', 1.0))
    u, v = uniforms(rng, n), uniforms(rng, n)
    z = _assign(u, z_probs)
    d_potential = (v[:, None, None] <= thresholds[None, :, :]).sum(axis=2).astype(np.int64)
    base = normals(rng, n)
    y_potential = base[:, None, None] + effect * np.arange(J)[None, :, None] + np.zeros((1, 1, K))
    shift = params.get('contaminated')
    if shift is not None:
        d, k, amount = shift
        y_potential[:, d, k] += amount
    return LatentDraws(z, d_potential, y_potential, tuple(range(J)), tuple(range(K)), True, z_probs=z_probs)


def _unordered(spec, rng, n):
    """Five response types over K = 3 instrument values and J = 3 unordered treatments."""
    params = spec.params
    R = ResponseMatrix(params.get('response_matrix', UNORDERED_RESPONSE))
    type_probs = _probabilities(params.get('type_probs', UNORDERED_TYPE_PROBS), 'type_probs', R.n_types)
    means = np.asarray(params.get('type_means', UNORDERED_TYPE_MEANS), dtype=np.float64)
    J = int(R.matrix.max()) + 1
    if means.shape != (R.n_types, J):
        raise ArgumentError(f"type_means must be {R.n_types} × {J}")
    z_probs = _probabilities(params.get('z_probs', np.full(R.K, 1.0 / R.K)), 'z_probs', R.K)
    u, v = uniforms(rng, n), uniforms(rng, n)
    z = _assign(u, z_probs)
    types = _assign(v, type_probs)
    d_potential = R.matrix[:, types].T.copy()
    base = normals(rng, n)
    y_potential = (base[:, None] + means[types])[:, :, None] + np.zeros((1, 1, R.K))
    return LatentDraws(z, d_potential, y_potential, tuple(range(J)), tuple(range(R.K)), False,
                       response_types=types, response_matrix=R.matrix, z_probs=z_probs)


def _confounded(spec, rng, n):
    """Z = (Z1, Z2): Z2 shifts D, Z1 shifts Y directly."""
    params = spec.params
    base_p = float(params.get('base', 0.4))
    shift = float(params.get('shift', 0.3))
    direct = float(params.get('direct', 1.0))
    effect = float(params.get('effect', 1.0))
    if not 0 <= base_p <= 1 or not 0 <= base_p + shift <= 1:
        raise ArgumentError('base and base + shift must be probabilities')
    u1, u2, v = uniforms(rng, n), uniforms(rng, n), uniforms(rng, n)
    z1 = (u1 <= 0.5).astype(np.int64)
    z2 = (u2 <= 0.5).astype(np.int64)
    support = ((0, 0), (0, 1), (1, 0), (1, 1))
    z = 2 * z1 + z2
    d_potential = np.column_stack([(v <= base_p + shift * b).astype(np.int64) for _, b in support])
    base = normals(rng, n)
    y_potential = np.stack([
        np.column_stack([base + effect * d + direct * a for a, _ in support]) for d in (0, 1)
    ], axis=1)
    return LatentDraws(z, d_potential, y_potential, (0, 1), support, True, z_probs=np.full(4, 0.25))


_FAMILIES = {
    'section5': _section5,
    'qob_calibrated': _qob,
    'custom': _custom,
    'ordered': _ordered,
    'unordered': _unordered,
    'confounded_components': _confounded,
}


def draw(spec, n=None, seed=None):
    """
    Draw n rows from a DGP.

    Returns:
        tuple: (Dataset, LatentDraws); the observed rows are the latent
        potentials evaluated at the realized instrument and treatment
    """
    if not isinstance(spec, DgpSpec):
        raise ArgumentError(f"expected a DgpSpec, got {type(spec).__name__}")
    n = spec.n if n is None else int(n)
    if n < 1:
        raise ArgumentError('n must be at least 1')
    seed = spec.seed if seed is None else seed
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    latent = _FAMILIES[spec.family](spec, rng, n)
    dataset = Dataset(latent.y, latent.d, latent.z, latent.treatment_support, latent.instrument_support,
                      latent.ordered, source=spec.label)
    return dataset, latent


def draw_components(spec, n=None, seed=None):
    """The confounded-component design as a ComponentTable with columns z1, z2."""
    if spec.family != 'confounded_components':
        raise UnsupportedModeError(f"{spec.family} does not have instrument components")
    dataset, latent = draw(spec, n, seed)
    support = np.array(latent.instrument_support)
    components = support[latent.z].astype(object)
    return ComponentTable(dataset.y, list(latent.d), components, ('z1', 'z2'), True)


def _exclusion_holds(latent, pair):
    return bool(np.array_equal(latent.y_potential[:, :, pair.k], latent.y_potential[:, :, pair.kprime]))


def _monotone(latent, pair):
    dk, dkp = latent.d_potential[:, pair.k], latent.d_potential[:, pair.kprime]
    if latent.ordered:
        return bool(np.all(dkp >= dk))
    for d in range(len(latent.treatment_support)):
        a, b = dk == d, dkp == d
        if not (np.all(b >= a) or np.all(b <= a)):
            return False
    return True


def _acr(latent, pair):
    """Σ_j ω_j E[Y_{d_j} − Y_{d_{j−1}} | D_z' >= d_j > D_z] with outcomes under z'."""
    labels = np.asarray(latent.treatment_support, dtype=np.float64)
    dk, dkp = latent.d_potential[:, pair.k], latent.d_potential[:, pair.kprime]
    weights, effects = [], []
    for j in range(1, len(labels)):
        movers = (dkp >= j) & (dk < j)
        mass = float(movers.mean())
        weights.append((labels[j] - labels[j - 1]) * mass)
        if mass > 0:
            y = latent.y_potential[movers, :, pair.kprime]
            effects.append(float(np.mean(y[:, j] - y[:, j - 1])))
        else:
            effects.append(0.0)
    total = sum(weights)
    if total <= 0:
        return 0.0, [0.0] * len(weights)
    omega = [w / total for w in weights]
    return float(np.dot(omega, effects)), omega


def _stratum_effects(latent, pair):
    """Latent E[Y_dz_k − Y_d'z_k' | (D_z_k, D_z_k') in Σ_d(t)] for every identified entry."""
    J = len(latent.treatment_support)
    response = k_transform(ResponseMatrix(latent.response_matrix), pair, J)
    observed = list(zip(latent.d_potential[:, pair.k].tolist(), latent.d_potential[:, pair.kprime].tolist()))
    effects = {}
    for _, d, dprime, t, tprime in mte_index(latent.d_potential.shape[1], J, [pair]):
        stratum = response.sigma_sets[(d, t)]
        if not stratum or stratum != response.sigma_sets[(dprime, tprime)]:
            continue
        members = np.array([types in stratum for types in observed])
        if members.any():
            diff = latent.y_potential[members, d, pair.k] - latent.y_potential[members, dprime, pair.kprime]
            effects[(d, dprime, t, tprime)] = float(diff.mean())
    return effects


def _set_truth(latent, value_set):
    """θ₁ = Σ μ_m β_(k_m, k_m+1) with population shares, first stages and the index g."""
    value_set = [int(v) for v in value_set]
    probs = latent.z_probs if latent.z_probs is not None else np.bincount(latent.z, minlength=len(
        latent.instrument_support)) / latent.n
    share = probs[value_set] / probs[value_set].sum()
    labels = np.asarray(latent.treatment_support, dtype=np.float64)
    p = np.array([labels[latent.d_potential[:, v]].mean() for v in value_set])
    gv = np.asarray(value_set, dtype=np.float64)
    w = share * (gv - share @ gv)
    den = float(np.sum(w * p))
    if abs(den) < Config.FIRST_STAGE_TOL:
        return 0.0, []
    tails = np.cumsum(w[::-1])[::-1]
    mu = [float((p[m + 1] - p[m]) * tails[m + 1] / den) for m in range(len(value_set) - 1)]
    betas = [_acr(latent, PairId(a, b))[0] for a, b in zip(value_set, value_set[1:])]
    return float(np.dot(mu, betas)), mu


def oracle_truth(latent, pair=None, value_set=None):
    """
    Brute-force truth over latent draws.

    A pair is valid when the exclusion restriction holds on every draw
    (Y_dz_k = Y_dz_k' for all d) and the treatment response is monotone
    between the two values. For a pair the ACR β and its ω weights are
    returned (binary D gives ω = (1,) when there are compliers); for a value
    set, θ₁ with its μ weights; for unordered draws with a response matrix,
    the identified stratum effects.

    Returns:
        OracleTruth
    """
    if pair is not None and value_set is not None:
        raise ArgumentError('pass either a pair or a value set, not both')
    K = len(latent.instrument_support)
    universe = PairSet.universe(K, BOTH if latent.ordered else UPPER)
    valid = PairSet((p for p in universe if _exclusion_holds(latent, p) and _monotone(latent, p)),
                    universe.orientation)
    truth = OracleTruth(valid_pairs=valid)
    if pair is not None:
        truth.pair = pair
        truth.valid = pair in valid
        if latent.ordered:
            truth.beta, truth.omega = _acr(latent, pair)
        elif latent.response_matrix is not None:
            if pair.k > pair.kprime:
                raise StructuralError('unordered pairs are taken with k < k\'')
            truth.effects = _stratum_effects(latent, pair)
    elif value_set is not None:
        if not latent.ordered:
            raise UnsupportedModeError('value-set estimands need ordered treatments')
        truth.value_set = list(value_set)
        truth.beta, truth.omega = _set_truth(latent, value_set)
        truth.valid = all(PairId(a, b) in valid for a, b in zip(value_set, value_set[1:]))
    return truth


def calibrate_qob(dataset, n=None):
    """
    The four application designs matched to a binary-treatment dataset.

    Z shares and P(D = 1 | z) are taken from the data; the second instrument
    value carries the contaminated outcome distribution.
    """
    if not dataset.ordered or dataset.J != 2:
        raise UnsupportedModeError('calibrated designs need a binary treatment')
    if dataset.K < 2:
        raise StructuralError('calibrated designs need at least two instrument values')
    counts = np.bincount(dataset.z, minlength=dataset.K)
    if np.any(counts == 0):
        raise StructuralError('every instrument value needs observations to calibrate a design')
    z_probs = counts / counts.sum()
    d_probs = np.array([dataset.d[dataset.z == k].mean() for k in range(dataset.K)])
    params = {
        'z_probs': z_probs.tolist(),
        'd_probs': d_probs.tolist(),
        'contaminated': 1,
        'z_labels': tuple(dataset.instrument_support),
    }
    n = dataset.n if n is None else n
    logger.info(f"Calibrated designs: z shares {np.round(z_probs, 4).tolist()}, "
                f"P(D=1|z) {np.round(d_probs, 4).tolist()}")
    return [DgpSpec('qob_calibrated', variant, n, 0, dict(params)) for variant in (1, 2, 3, 4)]


def _mode(dataset):
    if not dataset.ordered:
        return 'unordered'
    return 'binary' if dataset.J == 2 else 'ordered'


def replicate(spec, n, master_seed, dgp_index, rep, variant=ABS_SUP, endpoint_m=None, xi0=Config.XI0,
              km_grid=Config.KM_GRID, max_tuples=Config.MAX_PARTITION_TUPLES):
    """
    Effective comparands of one replication over the presumed pairs (k < k').

    A pair is selected at τ iff its entry is at most τ: the sup statistic,
    raised to the ψ comparand for multivalued treatments, and +inf for a
    pair with an empty instrument group.
    """
    dataset, _ = draw(spec, n, stream(master_seed, dgp_index, rep))
    pairs = PairSet.upper_triangle(dataset.K, UPPER)
    endpoints = None
    if endpoint_m is not None and endpoint_m < dataset.n:
        rows = stream(master_seed, dgp_index, rep, 1).choice(dataset.n, size=endpoint_m, replace=False)
        endpoints = np.unique(dataset.y[rows])
    mode = _mode(dataset)
    stats = [sup_stat_pair(dataset, pair, variant=variant, treatment_mode=mode, xi0=xi0, endpoints=endpoints)
             for pair in pairs]
    values = np.array([np.inf if s.degenerate else s.value for s in stats])
    if mode != 'binary':
        observed = [p for p, s in zip(pairs, stats) if not s.degenerate]
        reports = psi_reports(dataset, observed, quantile_partitions(dataset), Config.TAU, km_grid, max_tuples)
        for i, pair in enumerate(pairs):
            if pair in reports:
                values[i] = max(values[i], reports[pair].comparand)
    return values


def mc_statistics(spec, n=None, reps=100, master_seed=0, dgp_index=0, variant=ABS_SUP, endpoint_m=None,
                  n_jobs=1, xi0=Config.XI0):
    """reps × pairs matrix of effective comparands, rows in replication order."""
    if reps < 1:
        raise ArgumentError('reps must be at least 1')
    n = spec.n if n is None else n
    args = (spec, n, master_seed, dgp_index)
    if n_jobs == 1:
        rows = [replicate(*args, rep, variant, endpoint_m, xi0) for rep in range(reps)]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(replicate)(*args, rep, variant, endpoint_m, xi0)
                                       for rep in range(reps))
    return np.vstack(rows)


def _labels(spec, n):
    dataset, _ = draw(spec, min(n, 50), stream(0))
    return [dataset.pair_labels(p) for p in PairSet.upper_triangle(dataset.K, UPPER)]


def mc_selection_table(specs, n=None, reps=1000, tau_grid=(4.0,), master_seed=0, variant=ABS_SUP,
                       endpoint_m=None, n_jobs=None, xi0=Config.XI0):
    """
    Per-pair selection frequencies over replications, for each DGP and τ.

    Args:
        specs (list): DgpSpec per design; all must share the instrument support
        n (int): sample size; defaults to each spec's n
        reps (int): replications per design
        tau_grid (sequence): thresholds
        master_seed (int): seeds every replication through (master_seed, dgp, rep)
        variant (str): 'abs-sup' or 'pos-part'
        endpoint_m (int): endpoint subsample re-drawn per replication; None uses all outcomes
        n_jobs (int): joblib workers

    Returns:
        SimulationReport
    """
    specs = [specs] if isinstance(specs, DgpSpec) else list(specs)
    if not specs:
        raise ArgumentError('at least one DGP is required')
    if reps < 1:
        raise ArgumentError('reps must be at least 1')
    tau_grid = grid_values(tau_grid)
    n_jobs = n_jobs or Config.N_JOBS
    start = time.perf_counter()

    pair_labels = _labels(specs[0], n or specs[0].n)
    names, counts, valid_pairs = [], [], {}
    for i, spec in enumerate(specs):
        size = spec.n if n is None else n
        if _labels(spec, size) != pair_labels:
            raise ArgumentError(f"DGP {spec.label} has a different instrument support from {specs[0].label}")
        name = spec.label if spec.label not in names else f'{spec.label}#{i}'
        names.append(name)
        values = mc_statistics(spec, size, reps, master_seed, i, variant, endpoint_m, n_jobs, xi0)
        selected = values[:, None, :] <= tau_grid[None, :, None]
        counts.append(selected.sum(axis=0).astype(np.int64))

        dataset, latent = draw(spec, size, stream(master_seed, i, 0))
        truth = oracle_truth(latent)
        valid_pairs[name] = [dataset.pair_labels(p) for p in PairSet.upper_triangle(dataset.K, UPPER)
                             if p in truth.valid_pairs]
        logger.info(f"{name}: {reps} replications at n={size}, valid pairs {valid_pairs[name]}")

    report = SimulationReport(
        dgps=names,
        n=n if n is not None else specs[0].n,
        reps=reps,
        master_seed=master_seed,
        tau_grid=tau_grid,
        pair_labels=pair_labels,
        counts=np.stack(counts),
        runtime=time.perf_counter() - start,
        valid_pairs=valid_pairs,
    )
    logger.info(f"Simulation finished in {report.runtime:.1f}s")
    return report
