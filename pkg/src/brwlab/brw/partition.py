"""Partition functions of one tree or of an ensemble of replicas."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numba
import numpy as np

from ..numerics.rng import as_u64, replica_seed
from ..tree import MAX_RESAMPLES, OffspringLaw, TreeStream
from . import kernels as K
from .profiles import BarrierSpec, VarianceProfile, as_profile, critical_constants, warn_extreme_beta

DERIVATIVE_RTOL = 1e-12

# Prefer OpenMP or the built-in work queue; an outdated TBB only produces a warning.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


def log_normalizer(n: int, log_d: float, beta: float, var_total: float) -> float:
    """log of d**n * exp(beta**2 * var_total / 2)."""
    return n * log_d + 0.5 * beta * beta * var_total


@dataclass(frozen=True)
class ReplicaOutcome:
    """Log partition functions of one tree (``-inf`` encodes zero).

    ``log_J``/``log_Jbar`` equal ``log_W``/``log_Wbar`` when no barrier is
    requested.  ``D_n`` is NaN unless beta is the critical value.
    """

    n: int
    beta: float
    log_W: float
    log_Wbar: float
    log_J: float
    log_Jbar: float
    D_n: float
    leaf_count: int
    seed: int
    replica: int = 0
    resample: int = 0

    @property
    def log_K(self) -> float:
        return _log_diff(self.log_W, self.log_J)

    @property
    def log_Kbar(self) -> float:
        return _log_diff(self.log_Wbar, self.log_Jbar)


def _log_diff(a: float, b: float) -> float:
    if b == -math.inf:
        return a
    if b >= a:
        return -math.inf
    return a + math.log1p(-math.exp(b - a))


@dataclass
class ReplicaBatch:
    """Per-replica results of an ensemble, in replica order."""

    n: int
    beta: float
    seeds: np.ndarray
    log_W: np.ndarray
    log_Wbar: np.ndarray
    log_J: np.ndarray
    log_Jbar: np.ndarray
    D_n: np.ndarray
    leaf_count: np.ndarray
    first: int = 0

    def __len__(self) -> int:
        return self.seeds.size

    @property
    def W(self) -> np.ndarray:
        return np.exp(self.log_W)

    @property
    def Wbar(self) -> np.ndarray:
        return np.exp(self.log_Wbar)

    @property
    def J(self) -> np.ndarray:
        return np.exp(self.log_J)

    @property
    def Jbar(self) -> np.ndarray:
        return np.exp(self.log_Jbar)

    @property
    def K(self) -> np.ndarray:
        return np.exp(self.log_W) - np.exp(self.log_J)

    @property
    def Kbar(self) -> np.ndarray:
        return np.exp(self.log_Wbar) - np.exp(self.log_Jbar)

    def outcome(self, i: int) -> ReplicaOutcome:
        return ReplicaOutcome(self.n, self.beta, float(self.log_W[i]), float(self.log_Wbar[i]),
                              float(self.log_J[i]), float(self.log_Jbar[i]), float(self.D_n[i]),
                              int(self.leaf_count[i]), int(self.seeds[i]), self.first + i)


def set_workers(workers: int | None) -> None:
    if workers is not None and workers > 0:
        numba.set_num_threads(max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS)))


@dataclass(frozen=True)
class _Args:
    n: int
    d: int
    cdf: np.ndarray
    log_d: float
    beta: float
    scales: np.ndarray
    s_bar: np.ndarray
    alpha: float
    n0: int
    barrier: bool
    deriv: bool
    dshift: float
    L: int


def _prepare(law: OffspringLaw, n: int, beta: float, profile, barrier: BarrierSpec | None,
             derivative: bool | None, block_levels: int | None) -> tuple[_Args, VarianceProfile]:
    if n < 0:
        raise ValueError("depth must be non-negative")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    warn_extreme_beta(beta, n)
    prof = as_profile(profile, n)
    bc = critical_constants(law.mean_d).beta_c
    if derivative is None:
        derivative = abs(beta - bc) <= DERIVATIVE_RTOL * bc
    use_barrier = barrier is not None and not barrier.vacuous(n)
    L = K.block_levels(law.d, n) if block_levels is None else min(int(block_levels), n)
    if law.d and law.d**L > 1 << 26:
        raise ValueError("block too large")
    args = _Args(
        n=n, d=law.d, cdf=law.cdf, log_d=math.log(law.mean_d), beta=float(beta), scales=prof.scales,
        s_bar=prof.prefix, alpha=float(barrier.alpha) if use_barrier else 1.0,
        n0=int(barrier.n0) if use_barrier else n + 1, barrier=use_barrier, deriv=bool(derivative),
        dshift=0.5 * beta * beta * n, L=L,
    )
    return args, prof


def _finish(raw: np.ndarray, a: _Args, prof: VarianceProfile, normalized: bool):
    lw = raw[:, K.OUT_LW] - log_normalizer(a.n, a.log_d, a.beta, float(a.n))
    lwb = raw[:, K.OUT_LWB] - log_normalizer(a.n, a.log_d, a.beta, prof.total)
    if a.barrier:
        lj = raw[:, K.OUT_LJ] - log_normalizer(a.n, a.log_d, a.beta, float(a.n))
        ljb = raw[:, K.OUT_LJB] - log_normalizer(a.n, a.log_d, a.beta, prof.total)
    else:
        lj, ljb = lw.copy(), lwb.copy()
    if a.deriv:
        # D = sum (v - beta^2 n/2) exp(v - beta^2 n/2) [* d^-n], v = beta H
        shift = 0.5 * a.beta * a.beta * a.n + (a.n * a.log_d if normalized else 0.0)
        with np.errstate(over="ignore"):
            dn = np.exp(raw[:, K.OUT_LW] - shift) * raw[:, K.OUT_DA]
    else:
        dn = np.full(raw.shape[0], np.nan)
    return lw, lwb, lj, ljb, dn


def partition_pair(t: TreeStream, beta: float, profile=None, barrier: BarrierSpec | None = None,
                   normalized_derivative: bool = True, block_levels: int | None = None,
                   want_bar: bool = True) -> ReplicaOutcome:
    """Homogeneous and inhomogeneous partition functions of a single tree.

    Both share the tree's Gaussians; ``profile`` scales the inhomogeneous
    increments by sqrt(f(i/n)).  A barrier adds the restricted sums J.
    """
    a, prof = _prepare(t.law, t.depth, beta, profile, barrier, None, block_levels)
    raw = np.zeros((1, K.N_OUT))
    K.sweep_tree(as_u64(t.seed), a.n, a.d, a.cdf, t.conditioned, MAX_RESAMPLES, a.beta, a.scales, a.alpha,
                 a.n0, a.s_bar, a.barrier, True, want_bar, a.deriv, a.dshift, a.L, raw[0])
    if raw[0, K.OUT_RESAMPLE] < 0:
        raise RuntimeError("survival conditioning failed")
    lw, lwb, lj, ljb, dn = _finish(raw, a, prof, normalized_derivative)
    return ReplicaOutcome(t.depth, float(beta), float(lw[0]), float(lwb[0]), float(lj[0]), float(ljb[0]),
                          float(dn[0]), int(raw[0, K.OUT_LEAVES]), int(t.seed), 0, int(raw[0, K.OUT_RESAMPLE]))


def simulate_replicas(law: OffspringLaw, n: int, beta: float, replicas: int, base_seed: int, profile=None,
                      barrier: BarrierSpec | None = None, conditioned: bool = False, first: int = 0,
                      want_w: bool = True, want_bar: bool = True, derivative: bool | None = None,
                      normalized_derivative: bool = True, workers: int | None = None,
                      block_levels: int | None = None) -> ReplicaBatch:
    """Independent trees with seeds ``replica_seed(base_seed, first + r)``.

    Every replica is a pure function of its seed, so the result does not
    depend on the number of worker threads.
    """
    if replicas < 0:
        raise ValueError("replica count must be non-negative")
    a, prof = _prepare(law, n, beta, profile, barrier, derivative, block_levels)
    set_workers(workers)
    raw = np.zeros((replicas, K.N_OUT))
    base = as_u64(base_seed)
    K.sweep_replicas(base, first, replicas, a.n, a.d, a.cdf, conditioned, MAX_RESAMPLES, a.beta, a.scales,
                     a.alpha, a.n0, a.s_bar, a.barrier, want_w, want_bar, a.deriv, a.dshift, a.L, raw)
    if replicas and raw[:, K.OUT_RESAMPLE].min() < 0:
        raise RuntimeError("survival conditioning failed")
    lw, lwb, lj, ljb, dn = _finish(raw, a, prof, normalized_derivative)
    if not want_w:
        lw = lj = np.full(replicas, np.nan)
        dn = np.full(replicas, np.nan)
    if not want_bar:
        lwb = ljb = np.full(replicas, np.nan)
    seeds = np.array([replica_seed(base, first + r) for r in range(replicas)], dtype=np.uint64)
    return ReplicaBatch(n, float(beta), seeds, lw, lwb, lj, ljb, dn, raw[:, K.OUT_LEAVES].astype(np.int64), first)


def derivative_martingale(t: TreeStream, normalized: bool = True) -> float:
    """D_n at the critical inverse temperature of the tree's mean branching number.

    The unnormalized form sums (beta_c H - beta_c^2 n/2) exp(beta_c H - beta_c^2 n/2)
    over leaves; the normalized form (default) divides by d**n like W_n.
    """
    bc = critical_constants(t.law.mean_d).beta_c
    return partition_pair(t, bc, normalized_derivative=normalized, want_bar=False).D_n
