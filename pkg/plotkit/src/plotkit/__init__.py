"""plotkit: figures from divfree-flow CSV outputs."""

from .figures import (
    fit_slope,
    log_law,
    max_log_law_deviation,
    plot_profile,
    plot_spectrum,
)
from .io import SchemaError, load_profile, load_spectrum

__all__ = [
    "SchemaError",
    "fit_slope",
    "load_profile",
    "load_spectrum",
    "log_law",
    "max_log_law_deviation",
    "plot_profile",
    "plot_spectrum",
]
