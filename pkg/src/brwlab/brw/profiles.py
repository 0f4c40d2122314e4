"""Variance profiles, barriers and critical inverse temperatures."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PROFILE_KINDS = ("constant_one", "linear_decreasing", "piecewise_table", "custom_grid")
BETA_SQRT_N_WARN = 600.0


def grid_tolerance(n: int) -> float:
    """Allowed shortfall of f(1/n) below 1 for a depth-n grid."""
    return 4.0 / math.sqrt(n) if n > 0 else 1.0


@dataclass(frozen=True)
class ProfileSpec:
    """Depth-independent description of a variance profile f on [0, 1].

    ``piecewise_table`` takes ``points`` = [(t, f(t)), ...] with t spanning
    [0, 1] and interpolates linearly; ``custom_grid`` takes the grid values
    f(i/n), i = 1..n, directly and only fits that one depth.
    """

    kind: str = "constant_one"
    points: tuple[tuple[float, float], ...] = ()
    grid: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown variance profile {self.kind!r}")
        if self.kind == "piecewise_table":
            ts = [p[0] for p in self.points]
            if len(ts) < 2 or ts[0] != 0.0 or ts[-1] != 1.0 or any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("table points must be increasing in t from 0 to 1")
        if self.kind == "custom_grid" and not self.grid:
            raise ValueError("custom_grid needs grid values")

    @classmethod
    def parse(cls, text: str) -> "ProfileSpec":
        """``constant`` | ``linear`` | ``table:<path>`` (two columns t, f per line)."""
        if text in ("constant", "constant_one"):
            return cls("constant_one")
        if text in ("linear", "linear_decreasing"):
            return cls("linear_decreasing")
        if text.startswith("table:"):
            data = np.loadtxt(text[len("table:"):], delimiter=None, ndmin=2)
            return cls("piecewise_table", points=tuple((float(a), float(b)) for a, b in data[:, :2]))
        raise ValueError(f"unknown profile {text!r}")

    def at(self, n: int) -> "VarianceProfile":
        i = np.arange(1, n + 1) / n
        if self.kind == "constant_one":
            f = np.ones(n)
        elif self.kind == "linear_decreasing":
            f = 1.0 - i
        elif self.kind == "piecewise_table":
            t, v = np.array(self.points).T
            f = np.interp(i, t, v)
        else:
            if len(self.grid) != n:
                raise ValueError(f"custom grid has {len(self.grid)} values, depth is {n}")
            f = np.asarray(self.grid, dtype=float)
        return VarianceProfile(self.kind, n, f)


@dataclass(frozen=True)
class VarianceProfile:
    """Grid values f(i/n), i = 1..n, and prefix sums S_h = f(1/n) + ... + f(h/n)."""

    kind: str
    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n,):
            raise ValueError("profile grid must have one value per generation")
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise ValueError("profile values must lie in [0, 1]")
        if self.n and v[0] < 1.0 - grid_tolerance(self.n):
            raise ValueError("profile must start near 1: f(1/n) too small")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, n: int) -> "VarianceProfile":
        return ProfileSpec("constant_one").at(n)

    @classmethod
    def linear(cls, n: int) -> "VarianceProfile":
        return ProfileSpec("linear_decreasing").at(n)

    @property
    def prefix(self) -> np.ndarray:
        """S_0 = 0, S_1, ..., S_n (length n + 1), summed left to right."""
        s = np.zeros(self.n + 1)
        acc = 0.0
        for i, x in enumerate(self.values):
            acc += x
            s[i + 1] = acc
        return s

    @property
    def scales(self) -> np.ndarray:
        """sqrt(f) indexed by generation 1..n (entry 0 unused)."""
        out = np.zeros(self.n + 1)
        out[1:] = np.sqrt(self.values)
        return out

    @property
    def total(self) -> float:
        return float(self.prefix[-1])


@dataclass(frozen=True)
class BarrierSpec:
    """Paths must satisfy H_T < alpha * (variance up to T) for n0 <= T <= n."""

    alpha: float
    n0: int

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError("barrier slope must be positive")
        if self.n0 < 0:
            raise ValueError("barrier start must be non-negative")

    def vacuous(self, n: int) -> bool:
        """True when no path can be removed: no checked generation, or an infinite slope."""
        return self.n0 > n or self.alpha == math.inf


@dataclass(frozen=True)
class CriticalConstants:
    d: float
    beta_c: float
    beta_2: float


def critical_constants(d: float) -> CriticalConstants:
    """Free-energy critical point sqrt(2 ln d) and L2 threshold sqrt(ln d)."""
    if not d > 1:
        raise ValueError("subcritical mean: d must exceed 1")
    return CriticalConstants(float(d), math.sqrt(2.0 * math.log(d)), math.sqrt(math.log(d)))


def warn_extreme_beta(beta: float, n: int) -> None:
    if abs(beta) * math.sqrt(n) > BETA_SQRT_N_WARN:
        warnings.warn(f"beta*sqrt(n) = {abs(beta) * math.sqrt(n):.1f} exceeds {BETA_SQRT_N_WARN}; "
                      "log-domain results may lose precision", RuntimeWarning, stacklevel=3)


def as_profile(profile: VarianceProfile | ProfileSpec | str | None, n: int) -> VarianceProfile:
    if profile is None:
        return VarianceProfile.constant(n)
    if isinstance(profile, str):
        profile = ProfileSpec.parse(profile)
    if isinstance(profile, ProfileSpec):
        return profile.at(n)
    if profile.n != n:
        raise ValueError(f"profile built for depth {profile.n}, tree depth is {n}")
    return profile


def grid_values(values: Sequence[float]) -> VarianceProfile:
    return ProfileSpec("custom_grid", grid=tuple(float(v) for v in values)).at(len(values))
