"""Excursion-set statistics of time series.

One-point densities of peaks, troughs and up-crossings with Gaussian
baselines, unweighted two-point (cross-)correlations of those features,
market clustering matrices, Ward hierarchical clustering and a windowed
similarity measure for spotting regime changes.
"""
__version__ = "0.1.0"

from .ingest import (  # noqa: F401
    PriceTable,
    StandardizedSeries,
    align,
    load_price_table,
    log_returns,
    segment,
    standardize,
    synth,
    synth_price_table,
    table_to_series,
)
from .spectral import SpectralMoments, moments, power_spectrum, spectral_moment  # noqa: F401
from .features import (  # noqa: F401
    FeatureSpec,
    density_curve,
    find_peaks,
    find_troughs,
    find_upcrossings,
)
from .theory import (  # noqa: F401
    gaussian_peak_density,
    gaussian_upcross_density,
    quadrature_peak_density,
)
from .paircorr import estimate_xi, pair_counts, xi_max, xi_pipeline  # noqa: F401
from .matrices import build_delta, build_psi, lambda_max, partition, symmetrize  # noqa: F401
from .cluster import ahc, export_dendrogram  # noqa: F401
