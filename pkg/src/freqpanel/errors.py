"""Exception types shared across the package.

Each maps to a distinct CLI exit code so callers can tell bad input
apart from numerical failure and from bad configuration.
"""

from __future__ import annotations


class PanelDataError(ValueError):
    """Invalid or inconsistent panel input (shape, balance, non-finite values)."""


class EstimationError(RuntimeError):
    """Numerical failure during estimation (rank deficiency, singular covariance)."""


class ConfigError(ValueError):
    """Invalid configuration file or flag combination."""
