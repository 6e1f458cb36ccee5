"""
CSV report emission.

Reports are plain CSV bodies preceded by `#`-prefixed provenance lines. The
body depends only on the inputs and the seed; timestamps and versions live
in the header.
"""

from datetime import datetime, timezone
import json
import logging
import platform
import sys

import numpy as np
import pandas as pd
import scipy

from src import __version__

logger = logging.getLogger(__name__)


def provenance(command, **fields):
    """Ordered header fields: command line, caller fields, versions, timestamp."""
    header = {'command': command}
    header.update({k: v for k, v in fields.items() if v is not None})
    header['ivscreen'] = __version__
    header['python'] = platform.python_version()
    header['numpy'] = np.__version__
    header['scipy'] = scipy.__version__
    header['pandas'] = pd.__version__
    header['generated_at'] = datetime.now(timezone.utc).isoformat(timespec='seconds')
    return header


def format_report(records, header=None, columns=None):
    """Render records as provenance lines followed by a CSV body."""
    frame = pd.DataFrame.from_records(records, columns=columns)
    lines = [f'# {key}: {value}' for key, value in (header or {}).items()]
    body = frame.to_csv(index=False, float_format='%.10g', lineterminator='\n')
    return '\n'.join(lines + [body]) if lines else body


def write_report(records, path=None, header=None, columns=None):
    """
    Write a report to path, or to stdout when path is None or '-'.

    Returns:
        str: the rendered report
    """
    text = format_report(records, header, columns)
    if path in (None, '-'):
        sys.stdout.write(text)
    else:
        with open(path, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
        logger.info(f"Wrote {len(records)} report rows to {path}")
    return text


def read_report(path):
    """Read a report body back, skipping the provenance header."""
    return pd.read_csv(path, comment='#')


def report_body(text):
    """The CSV body of a rendered report (provenance lines removed)."""
    return '\n'.join(line for line in text.splitlines() if not line.startswith('#'))


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def json_safe(value):
    """Plain JSON types only (numpy scalars and arrays converted, non-finite floats as null)."""
    text = json.dumps(value, default=_json_default)
    return json.loads(text, parse_constant=lambda name: None)
