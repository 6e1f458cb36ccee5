"""
Validity pair set estimation.

This module assembles Ẑ₀ from the falsification statistics (and, for
multivalued treatments, the ψ screen), intersects it with a presumed pair
set, enumerates subinstruments and tunes τ by calibrated simulation.
"""

from itertools import combinations
import logging

from joblib import Parallel, delayed

from src.analysis.falsify_km import psi_reports, quantile_partitions
from src.analysis.falsify_kms import resolve_endpoints, sup_stat_pair
from src.config import Config, EndpointPolicy
from src.errors import ArgumentError, GuardError, UnsupportedModeError
from src.models.dataset import PairSet
from src.models.falsification import ABS_SUP, PairScreen, ValiditySetEstimate

logger = logging.getLogger(__name__)

KMS_ONLY = 'kms-only'
KMS_AND_KM = 'kms∩km'


def infer_mode(dataset):
    """binary for two ordered treatment values, ordered for more, else unordered."""
    if not dataset.ordered:
        return 'unordered'
    return 'binary' if dataset.J == 2 else 'ordered'


def estimate_z0(dataset, tau_n=Config.TAU, config=None, *, mode=None, variant=None, endpoint_policy=None,
                xi0=None, pairs=None, endpoints=None, partitions=None, t_n=None, km_grid=None,
                max_tuples=None, n_jobs=None):
    """
    Estimate the validity pair set.

    A pair is included iff its statistic is at most τ_n, both instrument
    groups are observed and, for multivalued treatments, it passes the ψ
    screen at t_n (τ_n unless configured). Keyword arguments override
    the matching RunConfig fields.

    Returns:
        ValiditySetEstimate
    """
    if tau_n <= 0:
        raise ArgumentError('tau_n must be positive')
    mode = mode or (config.mode if config else None) or infer_mode(dataset)
    variant = variant or (config.variant if config else ABS_SUP)
    xi0 = xi0 if xi0 is not None else (config.xi0 if config else Config.XI0)
    endpoint_policy = endpoint_policy or (config.endpoints if config else EndpointPolicy())
    t_n = t_n if t_n is not None else (config.t_n if config and config.t_n else tau_n)
    km_grid = km_grid or (config.km_grid if config else Config.KM_GRID)
    max_tuples = max_tuples or (config.max_partition_tuples if config else Config.MAX_PARTITION_TUPLES)
    n_jobs = n_jobs or (config.n_jobs if config else 1)

    universe = dataset.pair_universe()
    pairs = universe if pairs is None else PairSet(pairs, universe.orientation)
    if endpoints is None:
        endpoints = resolve_endpoints(dataset, endpoint_policy)

    def one(pair):
        return sup_stat_pair(dataset, pair, variant=variant, treatment_mode=mode, xi0=xi0, endpoints=endpoints)

    if n_jobs == 1 or len(pairs) < 2:
        stats = [one(pair) for pair in pairs]
    else:
        stats = Parallel(n_jobs=n_jobs, prefer='threads')(delayed(one)(pair) for pair in pairs)

    psi = {}
    if mode != 'binary':
        partitions = partitions if partitions is not None else quantile_partitions(dataset)
        observed = [p for p, s in zip(pairs, stats) if not s.degenerate]
        psi = psi_reports(dataset, observed, partitions, t_n, km_grid, max_tuples)

    per_pair = {}
    selected = []
    for pair, stat in zip(pairs, stats):
        report = psi.get(pair)
        included = not stat.degenerate and stat.value <= tau_n and (report is None or report.passes)
        if stat.degenerate:
            logger.warning(f"Pair {dataset.pair_labels(pair)} excluded: an instrument value has no observations")
        per_pair[pair] = PairScreen(stat.value, included, stat.degenerate, stat, report)
        if included:
            selected.append(pair)

    estimate = ValiditySetEstimate(
        selected=PairSet(selected, universe.orientation),
        per_pair=per_pair,
        tau_n=tau_n,
        xi0=xi0,
        mode=mode,
        sources=KMS_ONLY if mode == 'binary' else KMS_AND_KM,
        universe=pairs,
    )
    logger.info(f"Selected {len(selected)} of {len(pairs)} pairs at tau={tau_n} ({mode}, {variant})")
    return estimate


def intersect_presumed(est, presumed):
    """Ẑ₀ ∩ 𝒵_P."""
    presumed = presumed if isinstance(presumed, PairSet) else PairSet(presumed, est.selected.orientation)
    return est.selected.intersection(presumed)


def enumerate_subinstruments(table, tau_n=Config.TAU, config=None, max_components=Config.MAX_COMPONENTS,
                             **options):
    """
    Screen every non-empty combination of instrument components.

    Args:
        table (ComponentTable): outcomes, treatments and L instrument components
        tau_n (float): selection threshold
        config (RunConfig): optional screening configuration
        max_components (int): guard on L (2^L − 1 combinations)

    Returns:
        list: (component names, Dataset, ValiditySetEstimate) per combination
    """
    if table.L < 1:
        raise ArgumentError('at least one instrument component is required')
    if table.L > max_components:
        raise GuardError(f"{table.L} components give {2 ** table.L - 1} subinstruments; "
                         f"the limit is {max_components} components")
    results = []
    for size in range(1, table.L + 1):
        for columns in combinations(range(table.L), size):
            names = tuple(table.names[c] for c in columns)
            dataset = table.subinstrument(columns)
            estimate = estimate_z0(dataset, tau_n, config, **options)
            logger.info(f"Subinstrument {names}: {len(estimate.selected)} pairs selected")
            results.append((names, dataset, estimate))
    return results


def tune_tau(dataset, tau_grid, reps, seed, floor=Config.SELECTION_FLOOR, n=None, n_jobs=1,
             endpoint_m=200):
    """
    Selection rates of the four application-calibrated designs over a τ grid.

    The recommendation is the smallest τ whose valid-pair selection rates
    reach `floor` in every design.
    """
    from src.analysis.simulate import calibrate_qob, mc_selection_table

    if infer_mode(dataset) != 'binary':
        raise UnsupportedModeError('tau tuning is defined for binary treatments only')
    specs = calibrate_qob(dataset, n=n)
    report = mc_selection_table(specs, reps=reps, tau_grid=tau_grid, master_seed=seed,
                                variant='pos-part', endpoint_m=endpoint_m, n_jobs=n_jobs)
    report.recommendation = recommend_tau(report, floor)
    if report.recommendation is None:
        logger.warning(f"No tau on the grid reaches a selection rate of {floor} for every valid pair")
    else:
        logger.info(f"Recommended tau: {report.recommendation}")
    return report


def recommend_tau(report, floor):
    freq = report.frequencies
    for j, tau in enumerate(report.tau_grid):
        ok = True
        for i, dgp in enumerate(report.dgps):
            for label in report.valid_pairs.get(dgp, []):
                if freq[i, j, report.pair_labels.index(label)] < floor:
                    ok = False
        if ok:
            return float(tau)
    return None
