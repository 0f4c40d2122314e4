"""Compiled tree sweeps for the partition-function family.

Layout: a scalar depth-first walk over the top generations of the tree and,
for deterministic d-ary trees, a level-synchronous block kernel for the
bottom ``L`` generations below each generation-(n - L) vertex.  Inside a
block the ``d**k`` vertices of level ``k`` sit in flat arrays (child ``c``
of parent ``p`` at index ``c * P + p``), which lets LLVM vectorize the
Gaussian generation and the leaf reductions.  Memory is O(d**L + n) per
replica whatever the depth.

Each replica returns log-domain accumulators for four sums over leaves x:

    W    sum exp(beta * H(x))
    J    same sum restricted to paths obeying the homogeneous barrier
    Wb   sum exp(beta * Hb(x))        (profile-scaled Hamiltonian)
    Jb   same restricted to the inhomogeneous barrier

plus sum (beta * H - shift) exp(beta * H) for the derivative martingale.
J and W share their running max shift and are summed in the same order,
so J <= W holds exactly in floating point (likewise Jb <= Wb).

Barrier survival is carried as a 0/1 mask instead of pruning subtrees:
pruning would save work only for J, while W needs the full tree anyway.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from ..numerics.rng import GAMMA, GAUSSIAN_TAG, child_key, child_normal, mix, replica_seed, root_key
from ..numerics.vecmath import exp_fast, normal_pair
from ..tree import find_resample, offspring_count

BLOCK_CAP = 16384
# |normal_pair| <= sqrt(-2 log(2**-54)) = 8.652
GAUSS_MAX = 8.66

# accumulator slots
M_W, S_W, S_J, A_D, M_B, S_B, S_JB = range(7)
N_ACC = 7
# per-replica output columns
OUT_LW, OUT_LJ, OUT_LWB, OUT_LJB, OUT_DM, OUT_DA, OUT_LEAVES, OUT_RESAMPLE = range(8)
N_OUT = 8

JIT = dict(cache=True, error_model="numpy")
RED = dict(cache=True, error_model="numpy", fastmath={"reassoc", "nsz", "nnan"})


def block_levels(d: int, n: int) -> int:
    """Depth of the vectorized block: largest L <= n with d**L <= BLOCK_CAP."""
    if d <= 0:
        return 0
    L = 0
    while L < n and d ** (L + 1) <= BLOCK_CAP:
        L += 1
    return L


@njit(inline="always", **JIT)
def _merge(acc, i, m, s, sj, a, has_a):
    M = acc[i]
    if m > M:
        r = math.exp(M - m) if M > -np.inf else 0.0
        acc[i + 1] = acc[i + 1] * r + s
        acc[i + 2] = acc[i + 2] * r + sj
        if has_a:
            acc[i + 3] = acc[i + 3] * r + a
        acc[i] = m
    else:
        r = math.exp(m - M)
        acc[i + 1] += s * r
        acc[i + 2] += sj * r
        if has_a:
            acc[i + 3] += a * r


@njit(**RED)
def _reduce(H, alive, N, beta, dshift, barrier, deriv):
    """(max, sum e, masked sum e, sum (v - dshift) e) with e = exp(v - max), v = beta*H."""
    hm = -np.inf
    for j in range(N):
        h = H[j]
        hm = h if h > hm else hm
    m = beta * hm
    s = 0.0
    sj = 0.0
    a = 0.0
    if barrier and deriv:
        for j in range(N):
            v = beta * H[j]
            e = exp_fast(v - m)
            s += e
            sj += e * alive[j]
            a += (v - dshift) * e
    elif barrier:
        for j in range(N):
            e = exp_fast(beta * H[j] - m)
            s += e
            sj += e * alive[j]
    elif deriv:
        for j in range(N):
            v = beta * H[j]
            e = exp_fast(v - m)
            s += e
            a += (v - dshift) * e
        sj = s
    else:
        for j in range(N):
            s += exp_fast(beta * H[j] - m)
        sj = s
    # reassociated reductions may round the two sums differently; J <= W is exact
    return m, s, min(sj, s), a


@njit(**JIT)
def _grow(pk, pH, pHb, ck, cH, cHb, P, d, scale):
    """Gaussian increments for all children of the P parents of one level."""
    for jp in range((d + 1) // 2):
        c0 = 2 * jp
        o0 = c0 * P
        o1 = o0 + P
        u1 = GAMMA * np.uint64(c0 + 1)
        u2 = GAMMA * np.uint64(c0 + 2)
        if c0 + 1 < d:
            for p in range(P):
                z = pk[p] ^ GAUSSIAN_TAG
                g0, g1 = normal_pair(mix(z + u1), mix(z + u2))
                h = pH[p]
                hb = pHb[p]
                cH[o0 + p] = h + g0
                cH[o1 + p] = h + g1
                cHb[o0 + p] = hb + scale * g0
                cHb[o1 + p] = hb + scale * g1
        else:
            for p in range(P):
                z = pk[p] ^ GAUSSIAN_TAG
                g0, g1 = normal_pair(mix(z + u1), mix(z + u2))
                cH[o0 + p] = pH[p] + g0
                cHb[o0 + p] = pHb[p] + scale * g0


@njit(**RED)
def _max(x, P):
    m = -np.inf
    for j in range(P):
        v = x[j]
        m = v if v > m else m
    return m


@njit(**RED)
def _pairs_w(pk, pH, pa, P, u1, u2, beta, m, dshift, thr):
    s = 0.0
    sj = 0.0
    a = 0.0
    for p in range(P):
        z = pk[p] ^ GAUSSIAN_TAG
        g0, g1 = normal_pair(mix(z + u1), mix(z + u2))
        h0 = pH[p] + g0
        h1 = pH[p] + g1
        v0 = beta * h0
        v1 = beta * h1
        e0 = exp_fast(v0 - m)
        e1 = exp_fast(v1 - m)
        s += e0 + e1
        q = pa[p]
        sj += ((e0 if h0 < thr else 0.0) + (e1 if h1 < thr else 0.0)) * q
        a += (v0 - dshift) * e0 + (v1 - dshift) * e1
    return s, sj, a


@njit(**RED)
def _pairs_b(pk, pHb, pab, P, u1, u2, scale, beta, m, thr):
    s = 0.0
    sj = 0.0
    for p in range(P):
        z = pk[p] ^ GAUSSIAN_TAG
        g0, g1 = normal_pair(mix(z + u1), mix(z + u2))
        h0 = pHb[p] + scale * g0
        h1 = pHb[p] + scale * g1
        e0 = exp_fast(beta * h0 - m)
        e1 = exp_fast(beta * h1 - m)
        s += e0 + e1
        q = pab[p]
        sj += ((e0 if h0 < thr else 0.0) + (e1 if h1 < thr else 0.0)) * q
    return s, sj


@njit(**RED)
def _pairs_wb(pk, pH, pHb, pa, pab, P, u1, u2, scale, beta, mw, mb, dshift, thr, thr_b):
    s = 0.0
    sj = 0.0
    a = 0.0
    sb = 0.0
    sjb = 0.0
    for p in range(P):
        z = pk[p] ^ GAUSSIAN_TAG
        g0, g1 = normal_pair(mix(z + u1), mix(z + u2))
        h0 = pH[p] + g0
        h1 = pH[p] + g1
        v0 = beta * h0
        v1 = beta * h1
        e0 = exp_fast(v0 - mw)
        e1 = exp_fast(v1 - mw)
        s += e0 + e1
        q = pa[p]
        sj += ((e0 if h0 < thr else 0.0) + (e1 if h1 < thr else 0.0)) * q
        a += (v0 - dshift) * e0 + (v1 - dshift) * e1
        hb0 = pHb[p] + scale * g0
        hb1 = pHb[p] + scale * g1
        f0 = exp_fast(beta * hb0 - mb)
        f1 = exp_fast(beta * hb1 - mb)
        sb += f0 + f1
        qb = pab[p]
        sjb += ((f0 if hb0 < thr_b else 0.0) + (f1 if hb1 < thr_b else 0.0)) * qb
    return s, sj, a, sb, sjb


@njit(**JIT)
def _grow_reduce(pk, pH, pHb, pa, pab, P, d, scale, beta, dshift, thr, thr_b, want_w, want_b, acc):
    """Last generation fused with the leaf sums (even d only).

    Leaves are never stored.  The exponent shift is an upper bound on
    beta * H over the leaves: parent max plus the largest magnitude a
    Gaussian from ``normal_pair`` can take.
    """
    mw = beta * (_max(pH, P) + GAUSS_MAX)
    mb = beta * (_max(pHb, P) + GAUSS_MAX * scale)
    s = sj = a = sb = sjb = 0.0
    for jp in range(d // 2):
        u1 = GAMMA * np.uint64(2 * jp + 1)
        u2 = GAMMA * np.uint64(2 * jp + 2)
        if want_w and want_b:
            x0, x1, x2, x3, x4 = _pairs_wb(pk, pH, pHb, pa, pab, P, u1, u2, scale, beta, mw, mb, dshift, thr, thr_b)
            s += x0
            sj += x1
            a += x2
            sb += x3
            sjb += x4
        elif want_w:
            x0, x1, x2 = _pairs_w(pk, pH, pa, P, u1, u2, beta, mw, dshift, thr)
            s += x0
            sj += x1
            a += x2
        elif want_b:
            x3, x4 = _pairs_b(pk, pHb, pab, P, u1, u2, scale, beta, mb, thr_b)
            sb += x3
            sjb += x4
    if want_w:
        _merge(acc, M_W, mw, s, min(sj, s), a, True)
    if want_b:
        _merge(acc, M_B, mb, sb, min(sjb, sb), 0.0, False)


@njit(**JIT)
def _child_keys(pk, ck, P, d):
    for c in range(d):
        o = c * P
        u = GAMMA * np.uint64(c + 1)
        for p in range(P):
            ck[o + p] = mix(pk[p] + u)


@njit(**JIT)
def _mask(pa, ca, cH, P, d, thr, active):
    for c in range(d):
        o = c * P
        if active:
            for p in range(P):
                ca[o + p] = pa[p] if cH[o + p] < thr else 0.0
        else:
            for p in range(P):
                ca[o + p] = pa[p]


@njit(**JIT)
def _run_block(key, h0, hb0, a0, ab0, g0, L, d, beta, scales, alpha, n0, s_bar, barrier,
               want_w, want_b, deriv, dshift, bufs_k, bufs_h, bufs_hb, bufs_a, bufs_ab, acc):
    bufs_k[0, 0] = key
    bufs_h[0, 0] = h0
    bufs_hb[0, 0] = hb0
    bufs_a[0, 0] = a0
    bufs_ab[0, 0] = ab0
    P = 1
    fused = d % 2 == 0
    for lev in range(L):
        src = lev % 2
        dst = 1 - src
        T = g0 + lev + 1
        act = barrier and T >= n0
        if fused and lev == L - 1:
            thr = alpha * T if act else np.inf
            thr_b = alpha * s_bar[T] if act else np.inf
            _grow_reduce(bufs_k[src], bufs_h[src], bufs_hb[src], bufs_a[src], bufs_ab[src], P, d, scales[T],
                         beta, dshift, thr, thr_b, want_w, want_b, acc)
            return
        _grow(bufs_k[src], bufs_h[src], bufs_hb[src], bufs_k[dst], bufs_h[dst], bufs_hb[dst], P, d, scales[T])
        if lev < L - 1:
            _child_keys(bufs_k[src], bufs_k[dst], P, d)
        if barrier:
            _mask(bufs_a[src], bufs_a[dst], bufs_h[dst], P, d, alpha * T, act)
            _mask(bufs_ab[src], bufs_ab[dst], bufs_hb[dst], P, d, alpha * s_bar[T], act)
        P *= d
    fin = L % 2
    if want_w:
        m, s, sj, a = _reduce(bufs_h[fin], bufs_a[fin], P, beta, dshift, barrier, deriv)
        _merge(acc, M_W, m, s, sj, a, True)
    if want_b:
        m, s, sj, a = _reduce(bufs_hb[fin], bufs_ab[fin], P, beta, dshift, barrier, False)
        _merge(acc, M_B, m, s, sj, a, False)


@njit(**JIT)
def sweep_tree(seed, n, d, cdf, conditioned, max_tries, beta, scales, alpha, n0, s_bar,
               barrier, want_w, want_b, deriv, dshift, L, out):
    """One replica.  ``d > 0`` selects the deterministic d-ary tree, else ``cdf``."""
    acc = np.zeros(N_ACC)
    acc[M_W] = -np.inf
    acc[M_B] = -np.inf
    root = root_key(seed)
    resample = 0
    if conditioned and d == 0 and n > 0:
        resample = find_resample(root, n, cdf, d, max_tries)
        if resample < 0:
            out[OUT_RESAMPLE] = -1.0
            return
    if d == 0:
        L = 0
    g0 = n - L
    width = d**L if L > 0 else 1
    bufs_k = np.empty((2, width), dtype=np.uint64)
    bufs_h = np.empty((2, width))
    bufs_hb = np.empty((2, width))
    bufs_a = np.empty((2, width))
    bufs_ab = np.empty((2, width))
    leaves = 0.0

    keys = np.empty(n + 1, dtype=np.uint64)
    hs = np.zeros(n + 1)
    hbs = np.zeros(n + 1)
    al = np.ones(n + 1)
    alb = np.ones(n + 1)
    nch = np.zeros(n + 1, dtype=np.int64)
    nxt = np.zeros(n + 1, dtype=np.int64)
    keys[0] = root
    if g0 == 0:
        _run_block(root, 0.0, 0.0, 1.0, 1.0, 0, L, d, beta, scales, alpha, n0, s_bar, barrier,
                   want_w, want_b, deriv, dshift, bufs_k, bufs_h, bufs_hb, bufs_a, bufs_ab, acc)
        leaves = float(d) ** L
    else:
        nch[0] = offspring_count(root, resample, cdf, d)
        g = 0
        while g >= 0:
            if nxt[g] < nch[g]:
                c = nxt[g]
                nxt[g] += 1
                T = g + 1
                w = child_normal(keys[g], c, GAUSSIAN_TAG)
                h = hs[g] + w
                hb = hbs[g] + scales[T] * w
                a = al[g]
                ab = alb[g]
                if barrier and T >= n0:
                    a = a if h < alpha * T else 0.0
                    ab = ab if hb < alpha * s_bar[T] else 0.0
                k = child_key(keys[g], c)
                if T == g0:
                    if L > 0:
                        _run_block(k, h, hb, a, ab, g0, L, d, beta, scales, alpha, n0, s_bar, barrier,
                                   want_w, want_b, deriv, dshift, bufs_k, bufs_h, bufs_hb, bufs_a, bufs_ab, acc)
                        leaves += float(d) ** L
                    else:
                        v = beta * h
                        if want_w:
                            _merge(acc, M_W, v, 1.0, a, v - dshift, True)
                        if want_b:
                            _merge(acc, M_B, beta * hb, 1.0, ab, 0.0, False)
                        leaves += 1.0
                    continue
                g = T
                keys[g] = k
                hs[g] = h
                hbs[g] = hb
                al[g] = a
                alb[g] = ab
                nch[g] = offspring_count(k, resample, cdf, d)
                nxt[g] = 0
            else:
                g -= 1
    out[OUT_LW] = acc[M_W] + math.log(acc[S_W]) if acc[S_W] > 0 else -np.inf
    out[OUT_LJ] = acc[M_W] + math.log(acc[S_J]) if acc[S_J] > 0 else -np.inf
    out[OUT_LWB] = acc[M_B] + math.log(acc[S_B]) if acc[S_B] > 0 else -np.inf
    out[OUT_LJB] = acc[M_B] + math.log(acc[S_JB]) if acc[S_JB] > 0 else -np.inf
    out[OUT_DM] = acc[M_W]
    out[OUT_DA] = acc[A_D] / acc[S_W] if acc[S_W] > 0 else 0.0
    out[OUT_LEAVES] = leaves
    out[OUT_RESAMPLE] = resample


@njit(parallel=True, **JIT)
def sweep_replicas(base_seed, first, count, n, d, cdf, conditioned, max_tries, beta, scales, alpha,
                   n0, s_bar, barrier, want_w, want_b, deriv, dshift, L, out):
    for r in prange(count):
        sweep_tree(replica_seed(base_seed, first + r), n, d, cdf, conditioned, max_tries, beta, scales,
                   alpha, n0, s_bar, barrier, want_w, want_b, deriv, dshift, L, out[r])
