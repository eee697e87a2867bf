"""Figure rendering for KPO spectroscopy CSV outputs."""

__version__ = "0.1.0"

from .render import (
    SchemaError,
    Surface,
    load_summary,
    overlay_curve,
    plot_signal,
    plot_spectrum,
    read_matrix_csv,
    ridge_distance_bins,
)
