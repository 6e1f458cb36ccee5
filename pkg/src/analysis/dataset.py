"""
Ingestion and empirical-measure queries.

This module provides CSV ingestion into Dataset, interval mass queries over
the per-cell tables and subsample conditional moments.
"""

from typing import NamedTuple, Optional, Sequence
import logging

import numpy as np
import pandas as pd

from src.errors import ArgumentError, EmptyInputError, RowParseError, SchemaError
from src.models.dataset import ComponentTable, Dataset, PairId, PairSet

logger = logging.getLogger(__name__)

DEFAULT_SCHEMA = {'y': 'y', 'd': 'd', 'z': 'z'}


def _read_frame(path, columns):
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True,
                            encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise EmptyInputError(f"{path} is empty")
    except FileNotFoundError:
        raise SchemaError(f"input file not found: {path}")
    frame.columns = [str(c).strip() for c in frame.columns]
    for column in columns:
        if column not in frame.columns:
            raise SchemaError(f"column '{column}' not found in {path} (have: {', '.join(frame.columns)})")
    if frame.empty:
        raise EmptyInputError(f"{path} has a header but no data rows")
    for column in columns:
        blank = frame[column].str.strip() == ''
        if blank.any():
            line = int(np.flatnonzero(blank.to_numpy())[0]) + 2
            raise RowParseError(line, column, '', 'missing value')
    return frame


def _parse_outcomes(frame, column):
    values = pd.to_numeric(frame[column], errors='coerce').to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise RowParseError(row + 2, column, frame[column].iloc[row])
    return values


def coerce_labels(values):
    """Numeric labels become int (when integral) or float; otherwise strings."""
    values = [str(v).strip() for v in values]
    try:
        numbers = [float(v) for v in values]
    except ValueError:
        return values
    if all(float(x).is_integer() for x in numbers):
        return [int(x) for x in numbers]
    return numbers


def ingest_csv(path, schema=None, treatment_support: Optional[Sequence] = None,
               instrument_support: Optional[Sequence] = None, ordered=True):
    """
    Read a (y, d, z) CSV into a Dataset.

    Args:
        path (str): UTF-8 CSV with a header row
        schema (dict): maps 'y', 'd', 'z' to column names
        treatment_support (list): declared treatment labels, sorted distinct values if None
        instrument_support (list): declared instrument labels, sorted distinct values if None
        ordered (bool): False for unordered treatments

    Returns:
        Dataset: rows in file order
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    frame = _read_frame(path, [schema['y'], schema['d'], schema['z']])
    y = _parse_outcomes(frame, schema['y'])
    d_labels = coerce_labels(frame[schema['d']])
    z_labels = coerce_labels(frame[schema['z']])
    if ordered and not all(isinstance(v, (int, float)) for v in d_labels):
        column = frame[schema['d']].str.strip()
        bad = int(np.flatnonzero(pd.to_numeric(column, errors='coerce').isna().to_numpy())[0])
        raise RowParseError(bad + 2, schema['d'], column.iloc[bad], 'is not a numeric treatment')
    if treatment_support is not None:
        treatment_support = coerce_labels(treatment_support)
    if instrument_support is not None:
        instrument_support = coerce_labels(instrument_support)
    dataset = Dataset.from_labels(y, d_labels, z_labels, treatment_support, instrument_support,
                                  ordered=ordered, source=str(path))
    logger.info(f"Ingested {dataset.n} rows from {path} (J={dataset.J}, K={dataset.K})")
    return dataset


def ingest_components_csv(path, components, y_column='y', d_column='d', ordered=True):
    """Read outcomes, treatments and L instrument component columns."""
    if not components:
        raise ArgumentError('at least one instrument component column is required')
    frame = _read_frame(path, [y_column, d_column, *components])
    y = _parse_outcomes(frame, y_column)
    d_labels = coerce_labels(frame[d_column])
    matrix = np.empty((len(frame), len(components)), dtype=object)
    for j, column in enumerate(components):
        matrix[:, j] = coerce_labels(frame[column])
    logger.info(f"Ingested {len(frame)} rows with {len(components)} instrument components from {path}")
    return ComponentTable(y, d_labels, matrix, tuple(components), ordered)


def interval_mass(tables, d, z, a, b):
    """
    P̂(a <= Y <= b, D = d, Z = z).

    Args:
        tables (GroupTables): per-cell tables of a dataset
        d (int): treatment index
        z (int): instrument index
        a (float): left endpoint, closed
        b (float): right endpoint, closed

    Returns:
        float: cell count over n
    """
    if a > b:
        raise ArgumentError(f"interval endpoints out of order: [{a}, {b}]")
    return int(tables.cell(d, z).count_closed(a, b)) / tables.n


class Moment(NamedTuple):
    value: float
    size: int
    degenerate: bool


_VARIABLES = ('1', 'y', 'd', 'g', 'gy', 'gd', 'yd')


def _subset_values(subset):
    if isinstance(subset, PairId):
        return [subset.k, subset.kprime]
    if isinstance(subset, PairSet):
        return subset.values()
    return sorted(set(int(v) for v in subset))


def _variable(dataset, variable, g):
    if callable(variable):
        return np.asarray(variable(dataset), dtype=np.float64)
    if not isinstance(variable, str):
        return np.asarray(variable, dtype=np.float64)
    key = variable.lower().replace('*', '').replace('·', '')
    if key not in _VARIABLES:
        raise ArgumentError(f"unknown moment variable {variable!r}")
    gz = g(dataset.z) if g is not None else dataset.z.astype(np.float64)
    parts = {
        'y': dataset.y,
        'd': dataset.treatment_values if 'd' in key else None,
        'g': gz,
    }
    out = np.ones(dataset.n)
    for symbol in key.strip('1'):
        out = out * parts[symbol]
    return out


def cond_moment(dataset, variable, subset, g=None):
    """
    E_n(ξ | Z in subset): mean of ξ·1{Z in subset} over mean of 1{Z in subset}.

    An empty subsample returns 0 with the degenerate flag set.
    """
    values = _subset_values(subset)
    if not values:
        raise ArgumentError('moment subset must name at least one instrument value')
    mask = np.isin(dataset.z, values)
    size = int(mask.sum())
    if size == 0:
        logger.warning(f"Empty subsample for instrument values {values}; moment set to 0")
        return Moment(0.0, 0, True)
    xi = _variable(dataset, variable, g)
    return Moment(float(xi[mask].sum() / size), size, False)


def _label_index(labels, support, what):
    index = {label: i for i, label in enumerate(support)}
    try:
        return [index[label] for label in labels]
    except KeyError as e:
        raise SchemaError(f"{what} {e.args[0]!r} is not in the support {list(support)}")


def read_response_matrix(path, treatment_support):
    """
    K rows (instrument values in support order) × N_S columns of treatment
    labels, no header.

    Returns:
        ResponseMatrix
    """
    from src.models.unordered import ResponseMatrix

    try:
        frame = pd.read_csv(path, header=None, dtype=str, comment='#', skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyInputError(f"{path} is empty")
    except FileNotFoundError:
        raise SchemaError(f"response matrix file not found: {path}")
    support = coerce_labels(treatment_support)
    rows = [_label_index(coerce_labels(frame.iloc[i].tolist()), support, 'response matrix entry')
            for i in range(len(frame))]
    matrix = ResponseMatrix(np.array(rows, dtype=np.int64))
    logger.info(f"Read response matrix {matrix.K}x{matrix.n_types} from {path}")
    return matrix


def read_presumed_pairs(path, dataset):
    """
    One `z, z'` pair of instrument labels per line; a first line that does
    not name instrument values is taken as a header.

    Returns:
        PairSet: in the dataset's pair orientation
    """
    try:
        frame = pd.read_csv(path, header=None, dtype=str, comment='#', skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyInputError(f"{path} is empty")
    except FileNotFoundError:
        raise SchemaError(f"presumed pair file not found: {path}")
    if frame.shape[1] != 2:
        raise SchemaError(f"{path} must have two columns, found {frame.shape[1]}")
    support = list(dataset.instrument_support)
    rows = [coerce_labels(frame.iloc[i].tolist()) for i in range(len(frame))]
    if rows and not all(label in support for label in rows[0]):
        rows = rows[1:]
    orientation = dataset.pair_universe().orientation
    pairs = []
    for row in rows:
        k, kprime = _label_index(row, support, 'instrument value')
        pair = PairId(k, kprime)
        if orientation == 'upper' and k > kprime:
            pair = pair.reversed()
        pairs.append(pair)
    return PairSet(pairs, orientation)
