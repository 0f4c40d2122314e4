"""Exponential tilting of Gaussian vectors and tilted two-path walks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..numerics.rng import GAUSSIAN_TAG, as_u64, child_key, child_normal, replica_seed, root_key
from ..numerics.stats import wilson_interval
from .profiles import BarrierSpec, as_profile

PSD_TOL = 1e-10


def girsanov_shift(cov, mu, alpha) -> np.ndarray:
    """Mean of X ~ N(mu, cov) reweighted by exp(<alpha, X>) / E exp(<alpha, X>).

    The reweighted law is again Gaussian with mean mu + cov @ alpha and the
    same covariance, so only the mean is returned.
    """
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    k = mu.size
    if cov.shape != (k, k) or alpha.shape != (k,):
        raise ValueError("dimension mismatch between mean, covariance and tilt")
    if not np.allclose(cov, cov.T, atol=PSD_TOL, rtol=0):
        raise ValueError("covariance must be symmetric")
    if k and np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -PSD_TOL:
        raise ValueError("covariance must be positive semidefinite")
    return mu + cov @ alpha


@dataclass(frozen=True)
class TiltedPairResult:
    """Both-paths-in-barrier probability under the tilt, and the shared-segment check."""

    probability: float
    ci_lo: float
    ci_hi: float
    successes: int
    replicas: int
    shared_mean: float
    shared_stderr: float
    shared_expected: float


@njit(cache=True, error_model="numpy")
def _pair_walks(base, replicas, n, h, beta, scales, f, s_bar, alpha, n0, ok, shared):
    # path x = (0, 0, ..., 0); path y agrees for h steps, then takes child 1
    for r in range(replicas):
        kx = root_key(replica_seed(base, r))
        ky = kx
        hx = 0.0
        hy = 0.0
        good = True
        for i in range(1, n + 1):
            if i <= h:
                w = child_normal(kx, 0, GAUSSIAN_TAG)
                hx += scales[i] * w + 2.0 * beta * f[i]
                hy = hx
                kx = child_key(kx, 0)
                ky = kx
            else:
                cy = 1 if i == h + 1 else 0
                wx = child_normal(kx, 0, GAUSSIAN_TAG)
                wy = child_normal(ky, cy, GAUSSIAN_TAG)
                hx += scales[i] * wx + beta * f[i]
                hy += scales[i] * wy + beta * f[i]
                kx = child_key(kx, 0)
                ky = child_key(ky, cy)
            if i == h:
                shared[r] = hx
            if i >= n0 and (hx >= alpha * s_bar[i] or hy >= alpha * s_bar[i]):
                good = False
        if h == 0:
            shared[r] = 0.0
        ok[r] = good


def tilted_pair_walk(n: int, h: int, beta: float, profile, barrier: BarrierSpec, replicas: int, seed: int,
                     ci_level: float = 0.95) -> TiltedPairResult:
    """Two paths with overlap h under the measure tilted by exp(beta (Hbar(x) + Hbar(y))).

    Tilting shifts each shared increment by 2 beta f(i/n) and each
    unshared one by beta f(i/n); variances are unchanged.  The walks reuse
    the tree's vertex Gaussians along the two addressed paths.
    """
    if not 0 <= h <= n:
        raise ValueError("overlap must lie in [0, n]")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if replicas < 1:
        raise ValueError("need at least one replica")
    prof = as_profile(profile, n)
    f = np.zeros(n + 1)
    f[1:] = prof.values
    ok = np.zeros(replicas, dtype=np.bool_)
    shared = np.zeros(replicas)
    _pair_walks(as_u64(seed), replicas, n, h, float(beta), prof.scales, f, prof.prefix,
                float(barrier.alpha), int(barrier.n0), ok, shared)
    k = int(ok.sum())
    lo, hi = wilson_interval(k, replicas, ci_level)
    sm = float(shared.mean())
    se = float(shared.std(ddof=1) / np.sqrt(replicas)) if replicas > 1 else float("nan")
    return TiltedPairResult(k / replicas, lo, hi, k, replicas, sm, se, 2.0 * beta * float(prof.prefix[h]))
