"""
Dataset middleware for analysis requests.

This module resolves the observations an analysis request refers to: an
uploaded CSV (multipart field `file`) or inline JSON rows (`rows`), with
column names and treatment mode taken from the request.
"""

from functools import wraps
import io
import logging

import pandas as pd
from flask import g, jsonify, request
from werkzeug.utils import secure_filename

from src.analysis.dataset import ingest_csv
from src.errors import IvScreenError

logger = logging.getLogger(__name__)


def request_options():
    """Form fields for multipart requests, the JSON body otherwise."""
    if request.files:
        return request.form.to_dict()
    return request.get_json(silent=True) or {}


def extract_dataset_from_request(options):
    """
    Build a Dataset from the uploaded `file` or the inline `rows`.

    Returns:
        tuple: (Dataset, source name), or (None, None) when the request has neither

    Raises:
        IvScreenError: the rows do not parse
        ValueError: `rows` is not a list of objects
    """
    schema = {key: options.get(f'{key}_column', key) for key in ('y', 'd', 'z')}
    ordered = options.get('mode', 'binary') != 'unordered'

    upload = request.files.get('file')
    if upload is not None:
        name = secure_filename(upload.filename or 'upload.csv')
        buffer = io.StringIO(upload.read().decode('utf-8'))
        return ingest_csv(buffer, schema, ordered=ordered), name

    rows = options.get('rows')
    if not rows:
        return None, None
    if not isinstance(rows, list) or not all(isinstance(row, dict) for row in rows):
        raise ValueError('rows must be a list of objects')
    buffer = io.StringIO(pd.DataFrame.from_records(rows).to_csv(index=False))
    return ingest_csv(buffer, schema, ordered=ordered), 'inline rows'


def dataset_required(f):
    """
    Decorator that requires observations in the request.

    This decorator:
    1. Reads the request options (form fields or JSON body)
    2. Parses the uploaded file or inline rows into a Dataset
    3. Sets g.dataset, g.options, g.dataset_source and g.options_public
       (the options without inline rows, as stored with the run)

    Usage:
        @analysis_bp.route('/falsify', methods=['POST'])
        @dataset_required
        def falsify():
            stats = ... g.dataset ...
    """
    @wraps(f)
    def decorated_function(*args, **kwargs):
        options = request_options()
        try:
            dataset, source = extract_dataset_from_request(options)
        except (IvScreenError, ValueError, UnicodeDecodeError) as e:
            logger.warning(f"Rejected dataset in {request.path}: {str(e)}")
            return jsonify({'error': str(e)}), 400
        if dataset is None:
            return jsonify({
                'error': 'Dataset required',
                'message': 'Upload a CSV as `file` or send inline `rows`'
            }), 400
        g.dataset = dataset
        g.options = options
        g.dataset_source = source
        g.options_public = {**{k: v for k, v in options.items() if k != 'rows'}, 'source': source}
        return f(*args, **kwargs)

    return decorated_function
