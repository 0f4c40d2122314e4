"""Replica-ensemble experiments: phase scans, universality, fractional moments and decay fits."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .brw.moments import exact_second_moment_dary, log_second_moment_dary
from .brw.partition import ReplicaBatch, simulate_replicas
from .brw.profiles import BarrierSpec, ProfileSpec, critical_constants
from .crem_cascade import CremProfile, cascade_measure, crem_beta_c, crem_partition, crem_second_moment
from .numerics.fit import FitResult, fit_loglog
from .numerics.rng import derive_seed, replica_seeds
from .numerics.stats import EnsembleSummary
from .tree import OffspringLaw

CSV_HEADER = ("experiment", "n", "beta", "statistic", "mean", "stderr", "ci_lo", "ci_hi", "count", "seed",
              "config_hash")
GROWTH_THRESHOLD = 1.05
BETA_C_RTOL = 1e-9
SEPARATION_SIGMAS = 4.0

Progress = Callable[[str], None]


class ConfigError(ValueError):
    """An experiment configuration that is malformed or violates a precondition."""


def _quiet(_: str) -> None:
    pass


# ----------------------------------------------------------------------------
# configuration


def _as_tuple(v: Any, cast) -> tuple:
    if v is None:
        return ()
    if isinstance(v, (list, tuple)):
        return tuple(cast(x) for x in v)
    return (cast(v),)


def _as_int(v: Any) -> int:
    if isinstance(v, bool) or not float(v).is_integer():
        raise ConfigError(f"expected an integer, got {v!r}")
    return int(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment needs; ``workers`` only affects speed and is not hashed.

    ``profile`` is ``constant``, ``linear``, ``table:<path>`` or an inline
    list of (t, f(t)) points.  ``crem_profile`` lists the breakpoints of the
    CREM covariance shape.  ``n0`` may hold several barrier start depths.
    ``n1`` is the depth at which the inhomogeneous tree is split when the
    fractional moment is bounded through the subtrees below it.
    """

    d: int = 2
    law: str = "deterministic_d"
    law_params: dict = field(default_factory=dict)
    conditioned: bool = True
    n: tuple[int, ...] = (8,)
    beta: tuple[float, ...] = ()
    profile: str | tuple[tuple[float, float], ...] = "constant"
    crem_profile: tuple[tuple[float, float], ...] = ((0.0, 0.0), (1.0, 1.0))
    crem_a_prime_0: float | None = None
    replicas: int = 1000
    seed: int = 0
    a: float = 0.5
    alpha: float | None = None
    n0: tuple[int, ...] = (0,)
    n1: int | None = None
    ci_level: float = 0.95
    threshold: float = GROWTH_THRESHOLD
    mc_max_n: int = 8
    override: bool = False
    workers: int | None = None

    def __post_init__(self) -> None:
        # canonical numeric types, so equal configs hash equally however they were written
        set_ = object.__setattr__
        set_(self, "n", tuple(int(x) for x in self.n))
        set_(self, "n0", tuple(int(x) for x in self.n0))
        set_(self, "beta", tuple(float(x) for x in self.beta))
        set_(self, "crem_profile", tuple((float(x), float(y)) for x, y in self.crem_profile))
        if not isinstance(self.profile, str):
            set_(self, "profile", tuple((float(t), float(f)) for t, f in self.profile))
        for k in ("a", "ci_level", "threshold"):
            set_(self, k, float(getattr(self, k)))
        if self.replicas < 1:
            raise ConfigError("replicas must be at least 1")
        if any(not (b >= 0 and math.isfinite(b)) for b in self.beta):
            raise ConfigError("every beta must be finite and non-negative")
        if not 0 < self.a <= 1:
            raise ConfigError("fractional exponent a must lie in (0, 1]")
        if any(n < 0 for n in self.n):
            raise ConfigError("depths must be non-negative")
        if any(b <= a for a, b in zip(self.n, self.n[1:])):
            raise ConfigError("n list must be strictly increasing")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci level must lie in (0, 1)")
        if not self.threshold > 1:
            raise ConfigError("growth threshold must exceed 1")
        if any(x < 0 for x in self.n0):
            raise ConfigError("barrier start depths must be non-negative")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError("barrier slope alpha must be positive")
        if self.n1 is not None and not 0 <= self.n1 <= (self.n[0] if self.n else 0):
            raise ConfigError("decomposition depth n1 must lie in [0, smallest n]")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        try:
            self.offspring_law()
            self.profile_spec()
            self.crem_shape()
        except ConfigError:
            raise
        except (ValueError, KeyError, OSError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        kw: dict[str, Any] = {}
        try:
            for k, v in data.items():
                if k in ("n", "n0"):
                    kw[k] = _as_tuple(v, _as_int)
                elif k == "beta":
                    kw[k] = _as_tuple(v, float)
                elif k in ("d", "replicas", "seed", "mc_max_n"):
                    kw[k] = _as_int(v)
                elif k in ("n1", "workers"):
                    kw[k] = None if v is None else _as_int(v)
                elif k in ("a", "ci_level", "threshold"):
                    kw[k] = float(v)
                elif k in ("alpha", "crem_a_prime_0"):
                    kw[k] = None if v is None else float(v)
                elif k == "profile":
                    kw[k] = v if isinstance(v, str) else tuple((float(t), float(f)) for t, f in v)
                elif k == "crem_profile":
                    kw[k] = tuple((float(x), float(y)) for x, y in v)
                elif k in ("conditioned", "override"):
                    if not isinstance(v, bool):
                        raise ConfigError(f"{k} must be true or false")
                    kw[k] = v
                elif k == "law_params":
                    kw[k] = dict(v)
                else:
                    kw[k] = str(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[f.name] = v
        return out

    def canonical_json(self) -> str:
        d = self.to_dict()
        d.pop("workers")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.blake2b(self.canonical_json().encode(), digest_size=8).hexdigest()

    def offspring_law(self) -> OffspringLaw:
        if self.law == "deterministic_d":
            params = {"d": self.d, **self.law_params}
            return OffspringLaw("deterministic_d", {"d": _as_int(params["d"])})
        return OffspringLaw(self.law, dict(self.law_params))

    def profile_spec(self) -> ProfileSpec:
        if isinstance(self.profile, str):
            return ProfileSpec.parse(self.profile)
        return ProfileSpec("piecewise_table", points=tuple(self.profile))

    def crem_shape(self) -> CremProfile:
        return CremProfile.piecewise(self.crem_profile, self.crem_a_prime_0)

    def barrier(self, n0: int) -> BarrierSpec:
        if self.alpha is None:
            raise ConfigError("barrier slope alpha is required")
        return BarrierSpec(self.alpha, n0)

    @property
    def deterministic(self) -> bool:
        return self.law == "deterministic_d"

    @property
    def branching(self) -> float:
        return self.offspring_law().mean_d


def cell_seed(base: int, *parts: Any) -> int:
    """Seed of the replica family for one scan cell, derived from its labels."""
    label = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return derive_seed(base, int.from_bytes(label, "little"))


# ----------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class ScanRow:
    experiment: str
    n: int
    beta: float
    statistic: str
    mean: float
    stderr: float
    ci_lo: float
    ci_hi: float
    count: int
    seed: int
    config_hash: str

    def fields(self) -> list[str]:
        return [self.experiment, str(self.n), repr(float(self.beta)), self.statistic, repr(float(self.mean)),
                repr(float(self.stderr)), repr(float(self.ci_lo)), repr(float(self.ci_hi)), str(self.count),
                str(self.seed), self.config_hash]


@dataclass
class ScanResult:
    """Summaries per (n, beta, statistic) plus analytic values, with provenance.

    Monte Carlo cells hold an ``EnsembleSummary`` whose count is the replica
    count.  Analytic cells hold a float and are written with count 0 and a
    degenerate interval.
    """

    experiment: str
    config_hash: str
    seed: int
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    cells: dict[tuple[int, float, str], EnsembleSummary | float] = field(default_factory=dict)
    labels: dict[str, Any] = field(default_factory=dict)

    def add(self, n: int, beta: float, statistic: str, value: EnsembleSummary | float) -> None:
        self.cells[(int(n), float(beta), statistic)] = value

    def __getitem__(self, key: tuple[int, float, str]) -> EnsembleSummary | float:
        n, beta, stat = key
        return self.cells[(int(n), float(beta), stat)]

    def summary(self, n: int, beta: float, statistic: str) -> EnsembleSummary:
        v = self[n, beta, statistic]
        if not isinstance(v, EnsembleSummary):
            raise KeyError(f"{statistic} at n={n}, beta={beta} is analytic")
        return v

    def series(self, beta: float, statistic: str) -> list[tuple[int, EnsembleSummary | float]]:
        return sorted((n, v) for (n, b, s), v in self.cells.items() if b == float(beta) and s == statistic)

    def rows(self) -> list[ScanRow]:
        out = []
        for (n, beta, stat), v in self.cells.items():
            if isinstance(v, EnsembleSummary):
                lo, hi = v.ci
                out.append(ScanRow(self.experiment, n, beta, stat, v.mean, v.stderr, lo, hi, v.count, self.seed,
                                   self.config_hash))
            else:
                out.append(ScanRow(self.experiment, n, beta, stat, float(v), 0.0, float(v), float(v), 0,
                                   self.seed, self.config_hash))
        return out

    def write_csv(self, fh, header: bool = True) -> int:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(CSV_HEADER)
        rows = self.rows()
        for r in rows:
            w.writerow(r.fields())
        return len(rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def ci_separated(lower: EnsembleSummary, upper: EnsembleSummary) -> bool:
    """True when the interval of ``lower`` lies entirely below that of ``upper``."""
    return lower.ci[1] < upper.ci[0]


def _summ(values: np.ndarray, cfg: ExperimentConfig) -> EnsembleSummary:
    return EnsembleSummary.of(values, cfg.ci_level)


def _batch(cfg: ExperimentConfig, n: int, beta: float, seed: int, progress: Progress, **kw) -> ReplicaBatch:
    progress(f"n={n} beta={beta:g}: {cfg.replicas} replicas")
    return simulate_replicas(cfg.offspring_law(), n, beta, cfg.replicas, seed, profile=cfg.profile_spec(),
                             conditioned=cfg.conditioned and not cfg.deterministic, workers=cfg.workers, **kw)


def _require_beta(cfg: ExperimentConfig) -> tuple[float, ...]:
    if not cfg.beta:
        raise ConfigError("at least one beta is required")
    return cfg.beta


def _require_n(cfg: ExperimentConfig) -> tuple[int, ...]:
    if not cfg.n:
        raise ConfigError("at least one depth n is required")
    return cfg.n


def _profile_is_constant(cfg: ExperimentConfig, n: int) -> bool:
    return bool(np.all(cfg.profile_spec().at(n).values == 1.0))


# ----------------------------------------------------------------------------
# single-ensemble simulation


def simulate(cfg: ExperimentConfig, progress: Progress = _quiet) -> tuple[ScanResult, list[dict]]:
    """Plain ensembles of W and Wbar per (n, beta), with a per-replica dump."""
    res = ScanResult("simulate", cfg.config_hash, cfg.seed)
    dump = []
    for n in _require_n(cfg):
        for beta in _require_beta(cfg):
            seed = cell_seed(cfg.seed, "simulate", n, beta)
            b = _batch(cfg, n, beta, seed, progress)
            for name, vals in (("log_W", b.log_W), ("log_Wbar", b.log_Wbar)):
                if np.all(np.isfinite(vals)):
                    res.add(n, beta, name, _summ(vals, cfg))
            res.add(n, beta, "W", _summ(b.W, cfg))
            res.add(n, beta, "Wbar", _summ(b.Wbar, cfg))
            if np.all(np.isfinite(b.D_n)):
                res.add(n, beta, "D_n", _summ(b.D_n, cfg))
            for i in range(len(b)):
                o = b.outcome(i)
                dump.append({"seed": cfg.seed, "replica": o.replica, "replica_seed": o.seed, "n": n, "beta": beta,
                             "log_W": o.log_W, "log_Wbar": o.log_Wbar, "D_n": None if math.isnan(o.D_n) else o.D_n,
                             "leaf_count": o.leaf_count, "config_hash": cfg.config_hash})
    return res, dump


# ----------------------------------------------------------------------------
# universality


def universality_gap(cfg: ExperimentConfig, progress: Progress = _quiet) -> ScanResult:
    """Replica mean of |W_n - Wbar_n| on shared Gaussians, per (n, beta)."""
    res = ScanResult("universality", cfg.config_hash, cfg.seed)
    bc = critical_constants(cfg.branching).beta_c
    ns = _require_n(cfg)
    for beta in _require_beta(cfg):
        if beta >= bc and not cfg.override:
            raise ConfigError(f"beta={beta} is not below beta_c={bc:.10f} (set override to force)")
    if all(_profile_is_constant(cfg, n) for n in ns) and not cfg.override:
        raise ConfigError("gap identically zero: the profile is constant")
    for beta in cfg.beta:
        for n in ns:
            b = _batch(cfg, n, beta, cell_seed(cfg.seed, "universality", n, beta), progress)
            res.add(n, beta, "gap", _summ(np.abs(b.W - b.Wbar), cfg))
            res.add(n, beta, "W", _summ(b.W, cfg))
            res.add(n, beta, "Wbar", _summ(b.Wbar, cfg))
    return res


def gap_decreasing(res: ScanResult, beta: float) -> bool:
    """Means strictly decrease in n and the first and last intervals are disjoint."""
    s = [v for _, v in res.series(beta, "gap")]
    means = [v.mean for v in s]
    return all(b < a for a, b in zip(means, means[1:])) and ci_separated(s[-1], s[0])


# ----------------------------------------------------------------------------
# L2 phase scan


def growth_ratio(d: int, n: int, beta: float, profile=None) -> float:
    """E[Wbar_n**2] / E[Wbar_{n-1}**2] on the complete d-ary tree."""
    if n < 1:
        raise ValueError("growth ratio needs n >= 1")
    if profile is None or isinstance(profile, str) and profile in ("constant", "constant_one"):
        return math.exp(log_second_moment_dary(d, n, beta) - log_second_moment_dary(d, n - 1, beta))
    spec = profile if isinstance(profile, ProfileSpec) else ProfileSpec.parse(profile)
    return math.exp(log_second_moment_dary(d, n, beta, spec.at(n))
                    - log_second_moment_dary(d, n - 1, beta, spec.at(n - 1)))


def classify_l2(d: int, n_max: int, beta: float, threshold: float = GROWTH_THRESHOLD, profile=None) -> str:
    """``diverging`` if the second moment still grows by more than ``threshold`` at n_max."""
    return "diverging" if growth_ratio(d, n_max, beta, profile) > threshold else "bounded"


def l2_threshold(d: int, n_max: int, threshold: float = GROWTH_THRESHOLD, profile=None,
                 tol: float = 1e-10) -> tuple[float, float]:
    """Bracket [lo, hi] of the beta where ``classify_l2`` switches from bounded to diverging."""
    lo, hi = 0.0, critical_constants(d).beta_c
    while classify_l2(d, n_max, hi, threshold, profile) == "bounded":
        lo, hi = hi, 2.0 * hi
        if hi > 1e3:
            raise RuntimeError("no diverging beta found")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if classify_l2(d, n_max, mid, threshold, profile) == "bounded":
            lo = mid
        else:
            hi = mid
    return lo, hi


def phase_scan_l2(cfg: ExperimentConfig, progress: Progress = _quiet) -> ScanResult:
    """Exact E[Wbar_n**2] per (n, beta), a Monte Carlo check for small n, and a bounded/diverging label per beta.

    Monte Carlo cells are run only for n <= ``mc_max_n``; deeper cells carry
    the exact value alone.
    """
    if not cfg.deterministic:
        raise ConfigError("the L2 phase scan needs a deterministic d-ary tree")
    d = cfg.d
    spec = cfg.profile_spec()
    res = ScanResult("phase-scan", cfg.config_hash, cfg.seed)
    ns = _require_n(cfg)
    n_max = ns[-1]
    for beta in _require_beta(cfg):
        for n in ns:
            res.add(n, beta, "second_moment_exact", exact_second_moment_dary(d, n, beta, spec.at(n)))
            if n <= cfg.mc_max_n:
                b = _batch(cfg, n, beta, cell_seed(cfg.seed, "phase-scan", n, beta), progress, want_w=False)
                res.add(n, beta, "second_moment_mc", _summ(b.Wbar**2, cfg))
        if n_max >= 1:
            ratio = growth_ratio(d, n_max, beta, spec)
            res.add(n_max, beta, "growth_ratio", ratio)
            res.labels[f"beta={beta!r}"] = "diverging" if ratio > cfg.threshold else "bounded"
    if n_max >= 1:
        lo, hi = l2_threshold(d, n_max, cfg.threshold, spec)
        res.add(n_max, 0.5 * (lo + hi), "l2_threshold", 0.5 * (lo + hi))
        res.labels["l2_threshold"] = 0.5 * (lo + hi)
    return res


# ----------------------------------------------------------------------------
# fractional moments


def fractional_rate(a: float, beta: float, d: float) -> float:
    """Per-generation exponent (1 - a) ln d - a beta**2 / 2 + a**2 beta**2 / 2 of the bound on E[W_n**a]."""
    ld = math.log(d)
    return (1.0 - a) * ld - 0.5 * a * beta * beta + 0.5 * a * a * beta * beta


def optimal_exponent(beta: float, d: float) -> float:
    """Minimizer 1/2 + ln d / beta**2 of the rate, capped at 1."""
    if beta == 0:
        return 1.0
    return min(1.0, 0.5 + math.log(d) / (beta * beta))


def fractional_moment_scan(cfg: ExperimentConfig, progress: Progress = _quiet) -> ScanResult:
    """Replica means of W_n**a and Wbar_n**a with the analytic rate and optimal a."""
    res = ScanResult("fractional", cfg.config_hash, cfg.seed)
    a = cfg.a
    d = cfg.branching
    for beta in _require_beta(cfg):
        for n in _require_n(cfg):
            b = _batch(cfg, n, beta, cell_seed(cfg.seed, "fractional", n, beta), progress)
            res.add(n, beta, "W^a", _summ(b.W**a, cfg))
            res.add(n, beta, "Wbar^a", _summ(b.Wbar**a, cfg))
            rate = fractional_rate(a, beta, d)
            res.add(n, beta, "rate", rate)
            res.add(n, beta, "bound", math.exp(n * rate))
        res.labels[f"a_star[beta={beta!r}]"] = optimal_exponent(beta, d)
    return res


# ----------------------------------------------------------------------------
# Kahane comparison


@dataclass(frozen=True)
class KahaneRecord:
    n: int
    beta: float
    a: float
    mean_bar: float
    mean_hom: float
    difference: float
    stderr: float
    passed: bool


def _profile_max(spec: ProfileSpec, n: int) -> float:
    if spec.kind == "piecewise_table":
        return max(f for _, f in spec.points)
    if spec.kind == "custom_grid":
        return max(spec.grid)
    return 1.0


def kahane_check(cfg: ExperimentConfig, progress: Progress = _quiet) -> tuple[list[KahaneRecord], ScanResult]:
    """Check E[Wbar**a] >= E[W**a] - 4 stderr with the two fields drawn independently."""
    spec = cfg.profile_spec()
    ns = _require_n(cfg)
    if any(_profile_max(spec, n) > 1.0 for n in ns):
        raise ConfigError("kernel domination violated: the profile exceeds 1")
    res = ScanResult("kahane", cfg.config_hash, cfg.seed)
    records = []
    a = cfg.a
    for beta in _require_beta(cfg):
        for n in ns:
            s_hom = cell_seed(cfg.seed, "kahane", n, beta)
            s_bar = derive_seed(s_hom, 1)
            hom = _summ(_batch(cfg, n, beta, s_hom, progress, want_bar=False).W ** a, cfg)
            bar = _summ(_batch(cfg, n, beta, s_bar, progress, want_w=False).Wbar ** a, cfg)
            diff = bar.mean - hom.mean
            se = math.sqrt(bar.stderr**2 + hom.stderr**2) if cfg.replicas > 1 else 0.0
            rec = KahaneRecord(n, beta, a, bar.mean, hom.mean, diff, se, diff >= -SEPARATION_SIGMAS * se)
            records.append(rec)
            res.add(n, beta, "Wbar^a", bar)
            res.add(n, beta, "W^a", hom)
            res.add(n, beta, "difference", diff)
            res.add(n, beta, "difference_stderr", se)
            res.add(n, beta, "pass", float(rec.passed))
    return records, res


# ----------------------------------------------------------------------------
# critical decay


@dataclass(frozen=True)
class CriticalDecay:
    fit: FitResult
    ns: tuple[int, ...]
    medians: tuple[float, ...]
    scaled_medians: tuple[float, ...]
    scan: ScanResult

    @property
    def slope(self) -> float:
        return self.fit.slope

    def scaled_spread(self, last: int = 3) -> float:
        """max / min of the median of sqrt(n) Wbar_n over the last few depths."""
        tail = self.scaled_medians[-last:]
        return max(tail) / min(tail)


def decay_fit(ns: Sequence[int], medians: Sequence[float]) -> FitResult:
    """Log-log fit of medians against n; needs 3 points and n_max >= 2 n_min."""
    ns = list(ns)
    if len(ns) < 3 or ns[-1] < 2 * ns[0]:
        raise ConfigError("n list too short: need at least 3 depths and n_max >= 2 n_min")
    return fit_loglog(ns, medians)


def critical_decay_fit(cfg: ExperimentConfig, progress: Progress = _quiet) -> CriticalDecay:
    """Fit log median Wbar_n against log n at beta_c, with the sqrt(n)-scaled medians."""
    bc = critical_constants(cfg.branching).beta_c
    if any(abs(b - bc) > BETA_C_RTOL * bc for b in cfg.beta):
        raise ConfigError(f"critical fit requires beta = beta_c = {bc:.10f}")
    ns = _require_n(cfg)
    if len(ns) < 3 or ns[-1] < 2 * ns[0]:
        raise ConfigError("n list too short: need at least 3 depths and n_max >= 2 n_min")
    res = ScanResult("critical-fit", cfg.config_hash, cfg.seed)
    meds, scaled = [], []
    for n in ns:
        b = _batch(cfg, n, bc, cell_seed(cfg.seed, "critical-fit", n), progress, want_w=False,
                   derivative=False)
        w = b.Wbar
        meds.append(float(np.median(w)))
        scaled.append(float(np.median(math.sqrt(n) * w)))
        res.add(n, bc, "Wbar", _summ(w, cfg))
        res.add(n, bc, "median_Wbar", meds[-1])
        res.add(n, bc, "median_sqrt_n_Wbar", scaled[-1])
    fit = decay_fit(ns, meds)
    res.add(ns[-1], bc, "slope", fit.slope)
    res.add(ns[-1], bc, "slope_stderr", fit.stderr_slope)
    return CriticalDecay(fit, tuple(ns), tuple(meds), tuple(scaled), res)


# ----------------------------------------------------------------------------
# good environments


def good_env_mass(cfg: ExperimentConfig, progress: Progress = _quiet) -> ScanResult:
    """Barrier-restricted mass J_n / W_n and the remainder K_n = W_n - J_n per (n, beta, n0).

    All barrier starts of one (n, beta) share the same trees, so K_n is
    pathwise non-increasing in n0.
    """
    if cfg.alpha is None:
        raise ConfigError("barrier slope alpha is required")
    res = ScanResult("good-env", cfg.config_hash, cfg.seed)
    n0s = sorted(set(cfg.n0))
    for beta in _require_beta(cfg):
        if not beta < cfg.alpha < 2 * beta:
            warnings.warn(f"alpha={cfg.alpha} lies outside (beta, 2 beta) = ({beta}, {2 * beta})", RuntimeWarning,
                          stacklevel=2)
        for n in _require_n(cfg):
            seed = cell_seed(cfg.seed, "good-env", n, beta)
            ks = []
            for n0 in n0s:
                b = _batch(cfg, n, beta, seed, progress, barrier=cfg.barrier(n0))
                with np.errstate(invalid="ignore"):
                    ratio = np.where(b.W > 0, b.J / np.where(b.W > 0, b.W, 1.0), 1.0)
                    ratio_b = np.where(b.Wbar > 0, b.Jbar / np.where(b.Wbar > 0, b.Wbar, 1.0), 1.0)
                k = _summ(b.K, cfg)
                ks.append(k)
                res.add(n, beta, f"J/W[n0={n0}]", _summ(np.clip(ratio, 0.0, 1.0), cfg))
                res.add(n, beta, f"Jbar/Wbar[n0={n0}]", _summ(np.clip(ratio_b, 0.0, 1.0), cfg))
                res.add(n, beta, f"K[n0={n0}]", k)
                res.add(n, beta, f"Kbar[n0={n0}]", _summ(b.Kbar, cfg))
            means = [k.mean for k in ks]
            res.labels[f"K_decreasing[n={n},beta={beta!r}]"] = all(y <= x for x, y in zip(means, means[1:]))
    return res


# ----------------------------------------------------------------------------
# CREM and cascade ensembles


def crem_scan(cfg: ExperimentConfig, progress: Progress = _quiet) -> ScanResult:
    """Replica means of Z_n and log Z_n with the exact second moment."""
    shape = cfg.crem_shape()
    res = ScanResult("crem", cfg.config_hash, cfg.seed)
    res.labels["crem_beta_c"] = crem_beta_c(shape)
    for beta in _require_beta(cfg):
        for n in _require_n(cfg):
            progress(f"crem n={n} beta={beta:g}: {cfg.replicas} replicas")
            seeds = replica_seeds(cell_seed(cfg.seed, "crem", n, beta), cfg.replicas)
            logz = np.array([crem_partition(n, beta, shape, int(s)) for s in seeds])
            res.add(n, beta, "Z", _summ(np.exp(logz), cfg))
            res.add(n, beta, "log_Z", _summ(logz, cfg))
            res.add(n, beta, "second_moment_exact", crem_second_moment(n, beta, shape))
    return res


def cascade_scan(cfg: ExperimentConfig, progress: Progress = _quiet) -> ScanResult:
    """Replica means of the cascade's total mass at each depth m in the n list."""
    res = ScanResult("cascade", cfg.config_hash, cfg.seed)
    for beta in _require_beta(cfg):
        for m in _require_n(cfg):
            progress(f"cascade m={m} beta={beta:g}: {cfg.replicas} replicas")
            seeds = replica_seeds(cell_seed(cfg.seed, "cascade", m, beta), cfg.replicas)
            tot = np.array([math.exp(cascade_measure(m, beta, int(s)).log_total) for s in seeds])
            res.add(m, beta, "total_mass", _summ(tot, cfg))
    return res


def summarize_rows(rows: Iterable[ScanRow]) -> str:
    lines = []
    for r in rows:
        if r.count:
            lines.append(f"{r.experiment} n={r.n} beta={r.beta:.6g} {r.statistic}: {r.mean:.6g} "
                         f"+/- {r.stderr:.2g} [{r.ci_lo:.6g}, {r.ci_hi:.6g}] (count {r.count})")
        else:
            lines.append(f"{r.experiment} n={r.n} beta={r.beta:.6g} {r.statistic}: {r.mean:.10g}")
    return "\n".join(lines)
