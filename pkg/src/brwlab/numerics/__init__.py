"""Random streams, log-domain arithmetic, ensemble statistics and fits."""

from .fit import FitResult, fit_line, fit_loglog
from .logspace import LogSumExpAccumulator, LogWeight, combine, log_sum_exp
from .rng import SplitKey, Stream, children_gaussians, derive_seed, gaussian_at, replica_seeds
from .stats import EnsembleSummary, QuantileSketch, normal_quantile, wilson_interval

__all__ = [
    "EnsembleSummary", "FitResult", "LogSumExpAccumulator", "LogWeight", "QuantileSketch",
    "SplitKey", "Stream", "children_gaussians", "combine", "derive_seed", "fit_line",
    "fit_loglog", "gaussian_at", "log_sum_exp", "normal_quantile", "replica_seeds",
    "wilson_interval",
]
