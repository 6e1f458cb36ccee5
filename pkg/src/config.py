"""
Configuration for ivscreen.

This module provides the process-wide defaults (read from the environment),
the per-invocation RunConfig, and the key=value config file loader used by
the command line.
"""

from dataclasses import dataclass, field, fields, replace
from typing import Optional
import logging
import os

from src.errors import ArgumentError

logger = logging.getLogger(__name__)

MODES = ('binary', 'ordered', 'unordered')
VARIANTS = ('abs-sup', 'pos-part')


def _env_int(name, default):
    return int(os.environ.get(name, default))


def _env_float(name, default):
    return float(os.environ.get(name, default))


class Config:
    """Process defaults. Every value can be overridden through the environment."""

    SECRET_KEY = os.environ.get('SECRET_KEY', 'ivscreen-dev-key')
    SQLALCHEMY_DATABASE_URI = os.environ.get('DATABASE_URL', 'sqlite:///ivscreen_runs.db')
    SQLALCHEMY_TRACK_MODIFICATIONS = False
    PORT = _env_int('PORT', 5000)

    N_JOBS = _env_int('IVSCREEN_N_JOBS', 1)
    TAU = _env_float('IVSCREEN_TAU', 4.0)
    XI0 = _env_float('IVSCREEN_XI0', 0.001)
    MAX_PARTITION_TUPLES = _env_int('IVSCREEN_MAX_PARTITION_TUPLES', 10000)
    KM_GRID = _env_int('IVSCREEN_KM_GRID', 40)
    MAX_COMPONENTS = _env_int('IVSCREEN_MAX_COMPONENTS', 8)
    BRUTE_FORCE_MAX_N = _env_int('IVSCREEN_BRUTE_FORCE_MAX_N', 500)
    FIRST_STAGE_TOL = 1e-12
    SELECTION_FLOOR = 0.98

    @classmethod
    def as_flask_config(cls):
        """Upper-case attributes as a dict, the shape app.config.from_mapping expects."""
        return {key: getattr(cls, key) for key in dir(cls) if key.isupper()}


@dataclass
class EndpointPolicy:
    """Which realized outcomes serve as interval endpoints."""

    kind: str = 'all'
    m: Optional[int] = None
    seed: Optional[int] = None

    @classmethod
    def parse(cls, text):
        """Parse `all` or `subsample:M[:SEED]`."""
        if text is None or text == 'all':
            return cls()
        parts = str(text).split(':')
        if parts[0] != 'subsample' or len(parts) not in (2, 3):
            raise ArgumentError(f"endpoint policy must be 'all' or 'subsample:M[:SEED]', got {text!r}")
        try:
            m = int(parts[1])
            seed = int(parts[2]) if len(parts) == 3 else 0
        except ValueError:
            raise ArgumentError(f"endpoint policy has a non-integer field: {text!r}")
        if m < 1:
            raise ArgumentError('subsample size must be at least 1')
        return cls(kind='subsample', m=m, seed=seed)

    def __str__(self):
        if self.kind == 'all':
            return 'all'
        return f'subsample:{self.m}:{self.seed}'


@dataclass
class RunConfig:
    """Everything one CLI or API invocation needs."""

    input_path: Optional[str] = None
    y_column: str = 'y'
    d_column: str = 'd'
    z_column: str = 'z'
    mode: str = 'binary'
    tau: float = Config.TAU
    xi0: float = Config.XI0
    variant: str = 'abs-sup'
    endpoints: EndpointPolicy = field(default_factory=EndpointPolicy)
    presumed_path: Optional[str] = None
    g_spec: str = 'index'
    alpha: float = 0.05
    output_path: Optional[str] = None
    seed: int = 0
    response_matrix_path: Optional[str] = None
    multivalued: bool = False
    n_jobs: int = Config.N_JOBS
    km_grid: int = Config.KM_GRID
    max_partition_tuples: int = Config.MAX_PARTITION_TUPLES
    t_n: Optional[float] = None

    def validate(self):
        """Cross-check flags; raises ArgumentError with an actionable message."""
        if self.mode not in MODES:
            raise ArgumentError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.variant not in VARIANTS:
            raise ArgumentError(f"variant must be one of {', '.join(VARIANTS)}, got {self.variant!r}")
        if self.tau <= 0:
            raise ArgumentError('tau must be positive')
        if self.xi0 <= 0:
            raise ArgumentError('xi0 must be positive')
        if not 0 < self.alpha < 1:
            raise ArgumentError('alpha must lie strictly between 0 and 1')
        if self.t_n is not None and self.t_n <= 0:
            raise ArgumentError('t_n must be positive')
        if self.mode == 'unordered' and self.variant == 'pos-part':
            raise ArgumentError('pos-part variant is only defined for binary and ordered modes')
        if self.response_matrix_path and self.mode != 'unordered':
            raise ArgumentError('--response-matrix requires --mode unordered')
        return self

    @property
    def km_threshold(self):
        return self.t_n if self.t_n is not None else self.tau

    def with_overrides(self, **overrides):
        """Copy with non-None overrides applied (flags beat file values)."""
        known = {f.name for f in fields(self)}
        clean = {k: v for k, v in overrides.items() if v is not None and k in known}
        if isinstance(clean.get('endpoints'), str):
            clean['endpoints'] = EndpointPolicy.parse(clean['endpoints'])
        return replace(self, **clean)


_FLOAT_KEYS = {'tau', 'xi0', 'alpha', 't_n'}
_INT_KEYS = {'seed', 'n_jobs', 'km_grid', 'max_partition_tuples'}
_BOOL_KEYS = {'multivalued'}


def coerce_setting(key, value):
    """Type one setting given as text (JSON values pass through unchanged)."""
    if not isinstance(value, str):
        return EndpointPolicy.parse(value) if key == 'endpoints' else value
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _INT_KEYS:
        return int(value)
    if key in _BOOL_KEYS:
        return value.lower() in ('1', 'true', 'yes', 'on')
    if key == 'endpoints':
        return EndpointPolicy.parse(value)
    return value


def load_config_file(path):
    """
    Read a key=value config file.

    Args:
        path (str): file with one `key = value` per line; `#` starts a comment

    Returns:
        dict: typed values keyed by RunConfig field name
    """
    values = {}
    with open(path, encoding='utf-8') as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ArgumentError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split('=', 1))
            key = key.replace('-', '_')
            try:
                values[key] = coerce_setting(key, value)
            except ValueError:
                raise ArgumentError(f"{path}:{lineno}: bad value for {key}: {value!r}")
    logger.debug(f"Loaded {len(values)} settings from {path}")
    return values
