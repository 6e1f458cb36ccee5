"""
Analysis routes for ivscreen.

This module exposes the screening, estimation, testing and simulation
workflows over HTTP. Every request is stored in the run registry.
"""

from dataclasses import replace
import logging

from flask import Blueprint, g, jsonify, request

from src import __version__
from src.analysis.estimate import beta_vector, resolve_g, theta_partial
from src.analysis.infer import parse_hypothesis, wald_test
from src.analysis.simulate import mc_selection_table
from src.analysis.validity_set import estimate_z0, infer_mode
from src.config import RunConfig, coerce_setting
from src.errors import ArgumentError, IvScreenError, UnsupportedModeError
from src.middleware.dataset import dataset_required
from src.models.dataset import PairSet
from src.models.run import db
from src.models.simulation import DgpSpec, parse_grid
from src.utils.database import recorded_run
from src.utils.reports import json_safe

logger = logging.getLogger(__name__)

analysis_bp = Blueprint('analysis', __name__, url_prefix='/api/v1')

SETTINGS = ('mode', 'tau', 'xi0', 'variant', 'endpoints', 't_n', 'km_grid', 'alpha', 'n_jobs', 'multivalued')


def run_config(options, dataset):
    """RunConfig from request options; the mode is inferred when not given."""
    values = {}
    for key in SETTINGS:
        if options.get(key) not in (None, ''):
            try:
                values[key] = coerce_setting(key, options[key])
            except ValueError:
                raise ArgumentError(f"bad value for {key}: {options[key]!r}")
    if 'g' in options:
        values['g_spec'] = options['g']
    config = RunConfig().with_overrides(**values)
    if 'mode' not in values:
        config = replace(config, mode=infer_mode(dataset))
    return config.validate()


def presumed_pairs(options, dataset):
    """`presumed`: list of [z, z'] instrument label pairs, or None."""
    presumed = options.get('presumed')
    if not presumed:
        return None
    support = list(dataset.instrument_support)
    labels = [str(v) for v in support]
    pairs = []
    for item in presumed:
        if not isinstance(item, (list, tuple)) or len(item) != 2 or not all(str(v) in labels for v in item):
            raise ArgumentError(f"presumed pair {item!r} must name two instrument values from {support}")
        pairs.append(tuple(labels.index(str(v)) for v in item))
    universe = dataset.pair_universe()
    if universe.orientation == 'upper':
        pairs = [tuple(sorted(p)) for p in pairs]
    return PairSet(pairs, universe.orientation)


def _screen(dataset, config, options):
    screened = estimate_z0(dataset, config.tau, config)
    presumed = presumed_pairs(options, dataset)
    selected = screened.selected if presumed is None else screened.selected.intersection(presumed)
    return screened, selected


def _failure(e, what):
    """Map an exception to the JSON error response."""
    if isinstance(e, IvScreenError):
        return jsonify({'error': str(e)}), 400
    logger.error(f"Error in {what}: {str(e)}")
    db.session.rollback()
    return jsonify({'error': 'Internal server error'}), 500


@analysis_bp.route('/health', methods=['GET'])
def health():
    return jsonify({'status': 'healthy', 'version': __version__})


@analysis_bp.route('/falsify', methods=['POST'])
@dataset_required
def falsify():
    """
    Sup statistics and the estimated validity pair set.

    Body (JSON or multipart form):
    - rows / file: observations
    - y_column, d_column, z_column: column names (default y, d, z)
    - mode, tau, xi0, variant, endpoints, t_n, km_grid: screening settings
    - presumed: list of [z, z'] pairs intersected with the estimate
    """
    try:
        dataset = g.dataset
        config = run_config(g.options, dataset)
        summary = dict(n=dataset.n, mode=config.mode, tau=config.tau, seed=config.endpoints.seed)
        with recorded_run('falsify', g.options_public, **summary) as run:
            screened, selected = _screen(dataset, config, g.options)
            run['result'] = json_safe({
                'mode': config.mode,
                'tau': config.tau,
                'selected': [dataset.pair_labels(p) for p in selected],
                'pairs': screened.records(dataset),
            })
        return jsonify({'run': run['record'].slug, **run['result']}), 200
    except Exception as e:
        return _failure(e, 'falsify')


@analysis_bp.route('/estimate', methods=['POST'])
@dataset_required
def estimate():
    """
    Pairwise effects of the selected pairs.

    Body: the falsify fields plus
    - g: index, labels, or 'label=value,...'
    - value_set: list of instrument labels for the partial effect over them
    """
    try:
        dataset = g.dataset
        config = run_config(g.options, dataset)
        if config.mode == 'unordered':
            raise UnsupportedModeError('unordered treatments are estimated through the CLI with a response matrix')
        summary = dict(n=dataset.n, mode=config.mode, tau=config.tau, seed=config.endpoints.seed)
        with recorded_run('estimate', g.options_public, **summary) as run:
            _, selected = _screen(dataset, config, g.options)
            gmap = resolve_g(config.g_spec, dataset)
            late = beta_vector(dataset, selected, gmap)
            result = {'mode': config.mode, 'tau': config.tau, 'pairs': late.records(dataset)}

            value_set = g.options.get('value_set')
            if value_set:
                labels = [str(v) for v in dataset.instrument_support]
                missing = [v for v in value_set if str(v) not in labels]
                if missing:
                    raise ArgumentError(f"value set labels {missing} are not instrument values")
                theta = theta_partial(dataset, [labels.index(str(v)) for v in value_set], gmap)
                result['theta'] = theta.to_dict()
            run['result'] = json_safe(result)
        return jsonify({'run': run['record'].slug, **run['result']}), 200
    except Exception as e:
        return _failure(e, 'estimate')


@analysis_bp.route('/test', methods=['POST'])
@dataset_required
def test():
    """
    Wald test of A·β_S = b over selected pairs.

    Body: the estimate fields plus
    - pairs: list of "z:z'" strings (required)
    - A: rows separated by ';', entries by ','; identity if omitted
    - b: comma-separated right-hand side; zeros if omitted
    - alpha: test level (default 0.05)
    """
    try:
        dataset = g.dataset
        pairs = g.options.get('pairs')
        if not pairs:
            return jsonify({'error': 'pairs is required'}), 400
        if isinstance(pairs, str):
            pairs = [p for p in pairs.split(',') if p.strip()]
        config = run_config(g.options, dataset)
        if config.mode == 'unordered':
            raise UnsupportedModeError('the Wald test is defined for binary and ordered treatments')
        hypothesis = parse_hypothesis(pairs, dataset, g.options.get('A'), g.options.get('b'))
        with recorded_run('test', g.options_public, n=dataset.n, mode=config.mode, tau=config.tau) as run:
            _, selected = _screen(dataset, config, g.options)
            late = beta_vector(dataset, selected, resolve_g(config.g_spec, dataset))
            outcome = wald_test(late, hypothesis, config.alpha)
            run['result'] = json_safe({'pairs': list(pairs), **outcome.to_dict()})
        return jsonify({'run': run['record'].slug, **run['result']}), 200
    except Exception as e:
        return _failure(e, 'test')


@analysis_bp.route('/simulate', methods=['POST'])
def simulate():
    """
    Monte Carlo selection frequencies.

    Body (JSON):
    - families: list of "family[:index]" strings (required)
    - params: family parameters
    - n, reps, seed, tau_grid, variant, endpoint_m
    """
    try:
        data = request.get_json(silent=True) or {}
        families = data.get('families')
        if not families:
            return jsonify({'error': 'families is required'}), 400
        n = int(data.get('n', 1500))
        reps = int(data.get('reps', 100))
        seed = int(data.get('seed', 0))
        tau_grid = parse_grid(str(data.get('tau_grid', '4')))
        specs = [replace(DgpSpec.parse(text, n=n, seed=seed), params=data.get('params') or {})
                 for text in families]

        with recorded_run('simulate', data, n=n, seed=seed) as run:
            report = mc_selection_table(specs, n, reps, tau_grid, seed, data.get('variant', 'abs-sup'),
                                        data.get('endpoint_m'), data.get('n_jobs'))
            run['result'] = json_safe({
                'rows': report.records(),
                'valid_pairs': report.valid_pairs,
                'runtime': report.runtime,
            })
        return jsonify({'run': run['record'].slug, **run['result']}), 200
    except IvScreenError as e:
        return _failure(e, 'simulate')
    except (TypeError, ValueError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        return _failure(e, 'simulate')
