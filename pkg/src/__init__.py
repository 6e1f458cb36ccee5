"""ivscreen: validity-set instrumental variable screening and estimation."""

__version__ = '0.4.0'
