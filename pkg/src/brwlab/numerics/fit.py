"""Ordinary least squares on log-log data."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr_slope: float
    r_squared: float
    n_points: int


def fit_line(x: Sequence[float], y: Sequence[float]) -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3 or y.size != n:
        raise ValueError("insufficient points")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise ValueError("insufficient points: x values are all equal")
    slope = float(np.sum((x - xm) * (y - ym))) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    stderr = math.sqrt(ss_res / (n - 2) / sxx)
    return FitResult(slope, intercept, stderr, r2, n)


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> FitResult:
    """Fit log y = intercept + slope * log x; all inputs must be positive."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("insufficient points")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("log-log fit needs finite positive values")
    return fit_line(np.log(x), np.log(y))
