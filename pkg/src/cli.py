"""
Command line for ivscreen.

Usage:
    ivscreen falsify  --input data.csv [--mode ordered --multivalued]
    ivscreen tune-tau --input data.csv --tau-grid 2:6.5:0.5 --reps 1000
    ivscreen estimate --input data.csv --tau 4 [--presumed pairs.csv]
    ivscreen test     --input data.csv --pair 1:2 --pair 2:3 --A "1,-1"
    ivscreen simulate --family section5:1 --n 1500 --reps 1000 --tau-grid 2:6.5:0.5 --seed 7
    ivscreen serve

Settings come from `Config` (environment), then `--config FILE`
(key = value lines), then flags.
"""

from contextlib import contextmanager
from dataclasses import asdict, replace
from functools import wraps
import json
import logging
import shlex
import sys

import click
from click.core import ParameterSource
import numpy as np
import pandas as pd

from src import __version__
from src.analysis.dataset import (
    ingest_components_csv, ingest_csv, read_presumed_pairs, read_response_matrix,
)
from src.analysis.estimate import beta_vector, resolve_g, theta_partial
from src.analysis.infer import parse_hypothesis, wald_test
from src.analysis.simulate import mc_selection_table
from src.analysis.unordered_id import mte_unordered
from src.analysis.validity_set import (
    enumerate_subinstruments, estimate_z0, infer_mode, intersect_presumed, tune_tau,
)
from src.config import MODES, VARIANTS, Config, RunConfig, load_config_file
from src.errors import ArgumentError, IvScreenError, UnsupportedModeError
from src.models.simulation import DgpSpec, parse_grid
from src.utils.reports import provenance, write_report

logger = logging.getLogger(__name__)

PSI_COLUMNS = ('psi1', 'psi2', 'psi3', 'km_comparand', 'km_threshold')


def handle_errors(f):
    """Library errors become a one-line `error:` message and exit status 2."""
    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except IvScreenError as e:
            click.echo(f'error: {e}', err=True)
            sys.exit(2)
        except Exception as e:
            logger.error(f"Unexpected failure: {str(e)}", exc_info=True)
            click.echo(f'error: {e}', err=True)
            sys.exit(1)
    return wrapper


def _option_words(param, value):
    if value is None:
        return []
    if not isinstance(param, click.Option):
        values = value if isinstance(value, (list, tuple)) else [value]
        return [str(v) for v in values]
    if param.is_flag:
        if value:
            return [param.opts[-1]]
        return list(param.secondary_opts[-1:])
    words = []
    for v in (value if param.multiple else [value]):
        words += [param.opts[-1], str(v)]
    return words


def command_line(ctx):
    """The invocation rebuilt from each context's name and the parameters given on it."""
    chain = []
    while ctx is not None:
        chain.append(ctx)
        ctx = ctx.parent
    words = []
    for level in reversed(chain):
        words.append(level.info_name)
        for param in level.command.params:
            if level.get_parameter_source(param.name) in (None, ParameterSource.DEFAULT):
                continue
            words.extend(_option_words(param, level.params.get(param.name)))
    return shlex.join(words)


def input_options(f):
    """Input file, column schema and treatment mode."""
    options = [
        click.option('--input', 'input_path', type=click.Path(dir_okay=False), help='CSV with a header row'),
        click.option('--y-column', help='outcome column (default y)'),
        click.option('--d-column', help='treatment column (default d)'),
        click.option('--z-column', help='instrument column (default z)'),
        click.option('--mode', type=click.Choice(MODES), help='treatment mode; inferred from the data if omitted'),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def screening_options(f):
    """Flags of the validity set estimate."""
    options = [
        click.option('--tau', type=float, help=f'selection threshold tau_n (default {Config.TAU})'),
        click.option('--xi0', type=float, help=f'variance floor (default {Config.XI0})'),
        click.option('--variant', type=click.Choice(VARIANTS), help='statistic variant'),
        click.option('--endpoints', help="'all' or 'subsample:M[:SEED]'"),
        click.option('--t-n', type=float, help='threshold of the psi screen (default tau)'),
        click.option('--km-grid', type=int, help='psi3 scan grid size'),
        click.option('--n-jobs', type=int, help='joblib workers'),
        click.option('--output', 'output_path', help="report path; '-' or omitted writes to stdout"),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _run_config(ctx, **flags):
    """File values, then flags, validated."""
    base = RunConfig().with_overrides(**ctx.obj['file_values'])
    return base.with_overrides(**flags)


def _load(ctx, config):
    """Ingest the input CSV; an unset mode is inferred from the data."""
    if not config.input_path:
        raise ArgumentError('--input is required (or set input_path in the config file)')
    schema = {'y': config.y_column, 'd': config.d_column, 'z': config.z_column}
    mode_given = ctx.obj['mode_flag'] is not None or 'mode' in ctx.obj['file_values']
    dataset = ingest_csv(config.input_path, schema, ordered=config.mode != 'unordered')
    if not mode_given:
        config = replace(config, mode=infer_mode(dataset))
        logger.info(f"Treatment mode inferred as {config.mode}")
    return dataset, config.validate()


def _selected(dataset, config, screened):
    if not config.presumed_path:
        return screened.selected
    presumed = read_presumed_pairs(config.presumed_path, dataset)
    selected = intersect_presumed(screened, presumed)
    logger.info(f"{len(selected)} pairs left after intersecting with {config.presumed_path}")
    return selected


def _parameters(config, **extra):
    params = asdict(config)
    params['endpoints'] = str(config.endpoints)
    params.update(extra)
    return params


@contextmanager
def recording(ctx, command, parameters, **summary):
    """Store the run in the registry when --record is set."""
    if not ctx.obj['record']:
        yield {'record': None, 'result': None}
        return
    from app import create_app
    from src.utils.database import recorded_run

    app = create_app()
    with app.app_context():
        with recorded_run(command, parameters, **summary) as run:
            yield run
        logger.info(f"Recorded run {run['record'].slug}")


@click.group()
@click.version_option(__version__, prog_name='ivscreen')
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='key = value file; flags override its values')
@click.option('-v', '--verbose', is_flag=True, help='debug logging')
@click.option('--record', is_flag=True, help='store the run in the run registry database')
@click.pass_context
def cli(ctx, config_path, verbose, record):
    """Validity pair set screening and IV estimation."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )
    ctx.ensure_object(dict)
    try:
        ctx.obj['file_values'] = load_config_file(config_path) if config_path else {}
    except IvScreenError as e:
        click.echo(f'error: {e}', err=True)
        sys.exit(2)
    ctx.obj['record'] = record
    ctx.obj['config_path'] = config_path


@cli.command()
@input_options
@screening_options
@click.option('--presumed', 'presumed_path', help='CSV of presumed z,z\' pairs')
@click.option('--multivalued', is_flag=True, help='add psi1, psi2, psi3 and the KM comparand')
@click.option('--components', help='comma-separated instrument component columns; screens every subinstrument')
@click.pass_context
@handle_errors
def falsify(ctx, components, multivalued, **flags):
    """Sup statistics and the estimated validity pair set."""
    ctx.obj['mode_flag'] = flags.get('mode')
    config = _run_config(ctx, multivalued=multivalued or None, **flags)
    if components:
        return _falsify_components(ctx, config, [c.strip() for c in components.split(',') if c.strip()])

    dataset, config = _load(ctx, config)
    if config.multivalued and config.mode == 'binary':
        raise ArgumentError('--multivalued needs an ordered or unordered treatment')
    summary = dict(n=dataset.n, mode=config.mode, tau=config.tau, seed=config.endpoints.seed)
    with recording(ctx, 'falsify', _parameters(config), **summary) as run:
        screened = estimate_z0(dataset, config.tau, config)
        selected = _selected(dataset, config, screened)
        records = screened.records(dataset)
        for row in records:
            row['selected'] = any(dataset.pair_labels(p) == row['pair'] for p in selected)
            if not config.multivalued:
                for column in PSI_COLUMNS:
                    row.pop(column, None)
        run['result'] = {'selected': [dataset.pair_labels(p) for p in selected], 'pairs': records}

    header = provenance(command_line(ctx), input=config.input_path, n=dataset.n, mode=config.mode,
                        tau=config.tau, xi0=config.xi0, variant=config.variant, endpoints=str(config.endpoints))
    write_report(records, config.output_path, header)


def _falsify_components(ctx, config, components):
    if not config.input_path:
        raise ArgumentError('--input is required (or set input_path in the config file)')
    ordered = config.mode != 'unordered'
    table = ingest_components_csv(config.input_path, components, config.y_column, config.d_column, ordered)
    if ctx.obj['mode_flag'] is None and 'mode' not in ctx.obj['file_values'] and ordered:
        config = replace(config, mode='binary' if len(set(table.d_labels)) == 2 else 'ordered')
    config.validate()
    records = []
    with recording(ctx, 'falsify', _parameters(config, components=components),
                   n=len(table.y), mode=config.mode, tau=config.tau) as run:
        for names, dataset, screened in enumerate_subinstruments(table, config.tau, config):
            for row in screened.records(dataset):
                if not config.multivalued:
                    for column in PSI_COLUMNS:
                        row.pop(column, None)
                records.append({'subinstrument': '+'.join(names), **row})
        run['result'] = {'pairs': records}

    header = provenance(command_line(ctx), input=config.input_path, components=','.join(components),
                        tau=config.tau, xi0=config.xi0, variant=config.variant)
    write_report(records, config.output_path, header)


@cli.command('tune-tau')
@input_options
@click.option('--tau-grid', default='2:6.5:0.5', show_default=True, help='start:stop:step or a comma list')
@click.option('--reps', default=1000, show_default=True, type=int)
@click.option('--seed', type=int, help='master seed of the replications')
@click.option('--floor', default=Config.SELECTION_FLOOR, show_default=True, type=float,
              help='selection rate every valid pair must reach')
@click.option('--n', 'sample_size', type=int, help='simulated sample size (default: the data size)')
@click.option('--endpoint-m', default=200, show_default=True, type=int, help='endpoint subsample per replication')
@click.option('--n-jobs', type=int, help='joblib workers')
@click.option('--output', 'output_path', help="report path; '-' or omitted writes to stdout")
@click.pass_context
@handle_errors
def tune_tau_command(ctx, tau_grid, floor, sample_size, endpoint_m, reps, **flags):
    """Selection rates of the four calibrated designs over a tau grid."""
    ctx.obj['mode_flag'] = flags.get('mode')
    config = _run_config(ctx, **flags)
    dataset, config = _load(ctx, config)
    grid = parse_grid(tau_grid)
    params = _parameters(config, tau_grid=tau_grid, reps=reps, floor=floor, endpoint_m=endpoint_m)
    with recording(ctx, 'tune-tau', params, n=dataset.n, mode=config.mode, seed=config.seed) as run:
        report = tune_tau(dataset, grid, reps, config.seed, floor=floor, n=sample_size,
                          n_jobs=config.n_jobs, endpoint_m=endpoint_m)
        run['result'] = {'recommendation': report.recommendation, 'rows': report.records()}

    header = provenance(command_line(ctx), input=config.input_path, n=report.n, reps=reps, seed=config.seed,
                        tau_grid=tau_grid, floor=floor, endpoint_m=endpoint_m,
                        recommended_tau=report.recommendation if report.recommendation is not None else 'none')
    write_report(report.records(), config.output_path, header)


def _value_set(dataset, text):
    support = [str(v) for v in dataset.instrument_support]
    labels = [v.strip() for v in text.split(',') if v.strip()]
    missing = [v for v in labels if v not in support]
    if missing:
        raise ArgumentError(f"value set labels {missing} are not instrument values {support}")
    return [support.index(v) for v in labels]


def _summary_table(records):
    """Pairs as columns; beta, se and selection as rows."""
    frame = pd.DataFrame.from_records(records).set_index('pair')
    return frame[['beta', 'se', 'selected']].T.to_string()


@cli.command()
@input_options
@screening_options
@click.option('--presumed', 'presumed_path', help='CSV of presumed z,z\' pairs')
@click.option('--g', 'g_spec', help="g map: index, labels, 'label=value,...' or a CSV path")
@click.option('--value-set', help='comma-separated instrument labels; adds the partial effect over them')
@click.option('--response-matrix', 'response_matrix_path', help='K x N_S response matrix CSV (unordered mode)')
@click.pass_context
@handle_errors
def estimate(ctx, value_set, **flags):
    """Pairwise effects of the selected pairs."""
    ctx.obj['mode_flag'] = flags.get('mode')
    config = _run_config(ctx, **flags)
    dataset, config = _load(ctx, config)
    summary = dict(n=dataset.n, mode=config.mode, tau=config.tau, seed=config.endpoints.seed)

    if config.mode == 'unordered':
        return _estimate_unordered(ctx, dataset, config, summary)

    theta = None
    with recording(ctx, 'estimate', _parameters(config, value_set=value_set), **summary) as run:
        screened = estimate_z0(dataset, config.tau, config)
        selected = _selected(dataset, config, screened)
        g = resolve_g(config.g_spec, dataset)
        late = beta_vector(dataset, selected, g)
        records = late.records(dataset)
        if value_set:
            theta = theta_partial(dataset, _value_set(dataset, value_set), g)
        run['result'] = {'pairs': records, 'theta': theta.to_dict() if theta else None}

    extra = {}
    if theta is not None:
        extra = dict(value_set=value_set, theta1=f'{theta.theta1:.10g}',
                     theta1_se=f'{np.sqrt(max(theta.variance, 0.0) / dataset.n):.10g}')
    header = provenance(command_line(ctx), input=config.input_path, n=dataset.n, mode=config.mode,
                        tau=config.tau, g=config.g_spec, endpoints=str(config.endpoints), **extra)
    write_report(records, config.output_path, header)
    if config.output_path not in (None, '-'):
        click.echo(_summary_table(records))
        if theta is not None:
            click.echo(f"theta1 over {{{value_set}}}: {theta.theta1:.4f} (se {extra['theta1_se']})")


def _estimate_unordered(ctx, dataset, config, summary):
    if not config.response_matrix_path:
        raise ArgumentError('--response-matrix is required with --mode unordered')
    R = read_response_matrix(config.response_matrix_path, dataset.treatment_support)
    with recording(ctx, 'estimate', _parameters(config), **summary) as run:
        screened = estimate_z0(dataset, config.tau, config)
        selected = _selected(dataset, config, screened)
        mte = mte_unordered(dataset, selected, R)
        records = mte.records(dataset)
        run['result'] = {'values': records, 'notes': mte.notes}

    for note in mte.notes:
        logger.warning(note)
    header = provenance(command_line(ctx), input=config.input_path, n=dataset.n, mode=config.mode,
                        tau=config.tau, response_matrix=config.response_matrix_path)
    write_report(records, config.output_path, header)


@cli.command()
@input_options
@screening_options
@click.option('--presumed', 'presumed_path', help='CSV of presumed z,z\' pairs')
@click.option('--g', 'g_spec', help="g map: index, labels, 'label=value,...' or a CSV path")
@click.option('--pair', 'pairs', multiple=True, required=True, help="z:z' pair in the hypothesis (repeatable)")
@click.option('--A', 'restriction', help="restriction rows separated by ';', entries by ','; identity if omitted")
@click.option('--b', 'rhs', help='comma-separated right-hand side; zeros if omitted')
@click.option('--alpha', type=float, help='test level (default 0.05)')
@click.pass_context
@handle_errors
def test(ctx, pairs, restriction, rhs, **flags):
    """Wald test of a linear restriction on selected pairwise effects."""
    ctx.obj['mode_flag'] = flags.get('mode')
    config = _run_config(ctx, **flags)
    dataset, config = _load(ctx, config)
    if config.mode == 'unordered':
        raise UnsupportedModeError('the Wald test is defined for binary and ordered treatments')
    hypothesis = parse_hypothesis(list(pairs), dataset, restriction, rhs)
    params = _parameters(config, pairs=list(pairs), A=restriction, b=rhs)
    with recording(ctx, 'test', params, n=dataset.n, mode=config.mode, tau=config.tau) as run:
        screened = estimate_z0(dataset, config.tau, config)
        selected = _selected(dataset, config, screened)
        late = beta_vector(dataset, selected, resolve_g(config.g_spec, dataset))
        result = wald_test(late, hypothesis, config.alpha)
        row = {'pairs': ' '.join(pairs), **result.to_dict()}
        run['result'] = row

    header = provenance(command_line(ctx), input=config.input_path, n=dataset.n, mode=config.mode,
                        tau=config.tau, A=restriction or 'identity', b=rhs or 'zeros')
    write_report([row], config.output_path, header)


def _param_values(items):
    params = {}
    for item in items:
        key, sep, value = item.partition('=')
        if not sep:
            raise ArgumentError(f"--param expects key=value, got {item!r}")
        try:
            params[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            params[key.strip()] = value
    return params


@cli.command()
@click.option('--family', 'families', multiple=True, required=True,
              help='DGP as family[:index], e.g. section5:1 (repeatable)')
@click.option('--param', 'param_items', multiple=True, help='family parameter key=JSON value (repeatable)')
@click.option('--n', 'sample_size', default=1500, show_default=True, type=int)
@click.option('--reps', default=1000, show_default=True, type=int)
@click.option('--tau-grid', default='4', show_default=True, help='start:stop:step or a comma list')
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--variant', type=click.Choice(VARIANTS), default='abs-sup', show_default=True)
@click.option('--endpoint-m', type=int, help='endpoint subsample per replication (default: all outcomes)')
@click.option('--n-jobs', type=int, help='joblib workers')
@click.option('--output', 'output_path', help="report path; '-' or omitted writes to stdout")
@click.pass_context
@handle_errors
def simulate(ctx, families, param_items, sample_size, reps, tau_grid, seed, variant, endpoint_m, n_jobs,
             output_path):
    """Monte Carlo selection frequencies per DGP, tau and pair."""
    params = _param_values(param_items)
    specs = [replace(DgpSpec.parse(text, n=sample_size, seed=seed), params=params) for text in families]
    grid = parse_grid(tau_grid)
    n_jobs = n_jobs or ctx.obj['file_values'].get('n_jobs')
    summary = dict(n=sample_size, seed=seed)
    parameters = dict(families=list(families), params=params, reps=reps, tau_grid=tau_grid,
                      variant=variant, endpoint_m=endpoint_m)
    with recording(ctx, 'simulate', parameters, **summary) as run:
        report = mc_selection_table(specs, sample_size, reps, grid, seed, variant, endpoint_m, n_jobs)
        run['result'] = {'rows': report.records(), 'valid_pairs': report.valid_pairs}

    header = provenance(command_line(ctx), families=' '.join(families), n=sample_size, reps=reps, seed=seed,
                        tau_grid=tau_grid, variant=variant, endpoint_m=endpoint_m,
                        valid_pairs='; '.join(f'{k}={",".join(v) or "none"}' for k, v in report.valid_pairs.items()))
    write_report(report.records(), output_path, header)


@cli.command()
@click.option('--host', default='0.0.0.0', show_default=True)
@click.option('--port', default=Config.PORT, show_default=True, type=int)
@click.option('--debug', is_flag=True)
def serve(host, port, debug):
    """Run the HTTP API on the development server."""
    from app import create_app

    create_app().run(host=host, port=port, debug=debug)
