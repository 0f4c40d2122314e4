"""Continuous random energy model on the binary tree and the dyadic cascade."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from numba import njit

from .brw import kernels as K
from .brw.partition import log_normalizer
from .brw.profiles import warn_extreme_beta
from .numerics.logspace import LogWeight, log_sum_exp
from .numerics.rng import GAUSSIAN_TAG, as_u64, child_key, child_normal, root_key
from .tree import MAX_RESAMPLES

MAX_CASCADE_DEPTH = 24
LN2 = math.log(2.0)


@dataclass(frozen=True)
class CremProfile:
    """Covariance shape A: [0, 1] -> [0, 1], non-decreasing, A(0) = 0, A(1) = 1.

    A is a table of breakpoints interpolated linearly (the default table
    {(0, 0), (1, 1)} is A(x) = x).  Edge variances are computed in exact
    rational arithmetic from the table, so A(x) = x gives variances of
    exactly 1.  ``a_prime_0`` is the right derivative at 0; it defaults to
    the slope of the first segment and may be given explicitly.
    """

    breakpoints: tuple[tuple[float, float], ...] = ((0.0, 0.0), (1.0, 1.0))
    a_prime_0: float | None = None

    def __post_init__(self) -> None:
        xs = [Fraction(x) for x, _ in self.breakpoints]
        ys = [Fraction(y) for _, y in self.breakpoints]
        if len(xs) < 2 or xs[0] != 0 or xs[-1] != 1 or ys[0] != 0 or ys[-1] != 1:
            raise ValueError("A must run from A(0) = 0 to A(1) = 1")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("breakpoints must be strictly increasing in x")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise ValueError("A must be non-decreasing")
        if self.a_prime_0 is None:
            object.__setattr__(self, "a_prime_0", float(self._slopes()[0]))
        if not math.isfinite(self.a_prime_0):
            raise ValueError("A'(0) must be finite")

    @classmethod
    def identity(cls) -> "CremProfile":
        return cls()

    @classmethod
    def piecewise(cls, points: Sequence[tuple[float, float]], a_prime_0: float | None = None) -> "CremProfile":
        return cls(tuple((float(x), float(y)) for x, y in points), a_prime_0)

    def _points(self) -> list[tuple[Fraction, Fraction]]:
        return [(Fraction(a), Fraction(b)) for a, b in self.breakpoints]

    def _slopes(self) -> list[Fraction]:
        p = self._points()
        return [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(p, p[1:])]

    def _exact(self, x: Fraction) -> Fraction:
        pts = self._points()
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x <= x1:
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        return Fraction(1)

    def __call__(self, x: float) -> float:
        return float(self._exact(Fraction(x)))

    @property
    def sup_slope(self) -> float:
        return float(max(self._slopes()))

    def edge_variances(self, n: int) -> np.ndarray:
        """n (A(k/n) - A((k-1)/n)) for k = 1..n, each rounded once from its exact value."""
        if n < 0:
            raise ValueError("depth must be non-negative")
        if n == 0:
            return np.zeros(0)
        vals = [self._exact(Fraction(k, n)) for k in range(n + 1)]
        return np.array([float(n * (b - a)) for a, b in zip(vals, vals[1:])])


def crem_beta_c(profile: CremProfile) -> float:
    """sqrt(2 ln 2) / sqrt(A'(0)); requires sup A' <= A'(0)."""
    a0 = profile.a_prime_0
    if not a0 > 0:
        raise ValueError("A'(0) must be positive")
    if profile.sup_slope > a0 * (1 + 1e-12):
        raise ValueError("sup A' exceeds A'(0)")
    return math.sqrt(2.0 * LN2) / math.sqrt(a0)


def crem_partition(n: int, beta: float, profile: CremProfile, seed: int) -> LogWeight:
    """log Z_n = log sum_x exp(beta H(x)) - (n ln 2 + beta**2 n / 2) on the binary tree.

    H sums independent edge Gaussians of variance n (A(k/n) - A((k-1)/n))
    built from the same vertex draws as the branching random walk, so for
    A(x) = x the result matches the homogeneous log W_n of the same seed.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    warn_extreme_beta(beta, n)
    if n == 0:
        return 0.0
    var = profile.edge_variances(n)
    scales = np.zeros(n + 1)
    scales[1:] = np.sqrt(var)
    s_bar = np.zeros(n + 1)
    s_bar[1:] = np.cumsum(var)
    raw = np.zeros(K.N_OUT)
    K.sweep_tree(as_u64(seed), n, 2, np.ones(1), False, MAX_RESAMPLES, float(beta), scales, 1.0, n + 1, s_bar,
                 False, True, True, False, 0.5 * beta * beta * n, K.block_levels(2, n), raw)
    return float(raw[K.OUT_LWB] - log_normalizer(n, LN2, float(beta), float(n)))


def crem_second_moment(n: int, beta: float, profile: CremProfile) -> float:
    """E[Z_n**2] = (1/2) sum_{h<n} 2**-h exp(beta**2 n A(h/n)) + 2**-n exp(beta**2 n)."""
    var = profile.edge_variances(n)
    s = np.concatenate([[0.0], np.cumsum(var)])
    terms = [math.log(0.5) - h * LN2 + beta * beta * s[h] for h in range(n)]
    terms.append(-n * LN2 + beta * beta * s[n])
    return math.exp(log_sum_exp(terms))


# ----------------------------------------------------------------------------
# dyadic cascade


@njit(cache=True, error_model="numpy")
def _cascade(seed, m, beta, out):
    keys = np.empty(1 << m, dtype=np.uint64)
    nkeys = np.empty(1 << m, dtype=np.uint64)
    lm = np.zeros(1 << m)
    keys[0] = root_key(seed)
    step = -0.5 * beta * beta - math.log(2.0)
    size = 1
    for lev in range(m):
        for i in range(size - 1, -1, -1):
            k = keys[i]
            base = lm[i]
            for c in range(2):
                lm[2 * i + c] = base + (beta * child_normal(k, c, GAUSSIAN_TAG) + step)
                if lev < m - 1:
                    nkeys[2 * i + c] = child_key(k, c)
        size *= 2
        keys, nkeys = nkeys, keys
    out[:] = lm


@dataclass(frozen=True)
class DyadicMeasure:
    """Log masses of the 2**m dyadic intervals of [0, 1], left to right.

    Interval i at depth m corresponds to the tree vertex whose path is the
    binary expansion of i (most significant digit first).
    """

    m: int
    beta: float
    seed: int
    log_masses: np.ndarray

    @property
    def log_total(self) -> LogWeight:
        return log_sum_exp(self.log_masses)

    def coarsen(self, level: int) -> np.ndarray:
        """Log masses of the 2**level intervals at a coarser depth."""
        if not 0 <= level <= self.m:
            raise ValueError("level must lie in [0, m]")
        a = self.log_masses
        for _ in range(self.m - level):
            a = np.logaddexp(a[0::2], a[1::2])
        return a

    def to_csv(self, path, levels: Sequence[int] | None = None) -> int:
        """Write rows ``level,index,log_mass``; returns the number of data rows."""
        levels = [self.m] if levels is None else list(levels)
        rows = 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "index", "log_mass"])
            for lev in levels:
                for i, v in enumerate(self.coarsen(lev)):
                    w.writerow([lev, i, repr(float(v))])
                    rows += 1
        return rows


def cascade_measure(m: int, beta: float, seed: int) -> DyadicMeasure:
    """Multiplicative cascade with weights exp(beta w - beta**2 / 2) per level.

    Uses the binary tree's vertex Gaussians, so the total mass is the
    homogeneous W_m of the same seed.
    """
    if m > MAX_CASCADE_DEPTH:
        raise ValueError(f"depth cap: cascade depth must not exceed {MAX_CASCADE_DEPTH}")
    if m < 0:
        raise ValueError("cascade depth must be non-negative")
    warn_extreme_beta(beta, m)
    out = np.empty(1 << m)
    _cascade(as_u64(seed), m, float(beta), out)
    return DyadicMeasure(m, float(beta), int(seed), out)
