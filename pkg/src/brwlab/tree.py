"""Rooted trees with addressable Gaussian edge weights.

A tree is never stored.  Its shape (offspring counts) and its vertex
Gaussians are regenerated on demand from the counter-based streams in
``brwlab.numerics.rng``, so traversals use memory proportional to the depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numba import njit

from .numerics.rng import GAUSSIAN_TAG, child_key, child_normal, root_key_of, shape_uniform

MAX_CHILDREN = 64
MAX_RESAMPLES = 1_000_000

LAW_KINDS = ("deterministic_d", "poisson", "geometric", "binomial", "table")


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring distribution, truncated to ``MAX_CHILDREN`` and renormalized.

    Parameters by kind:
      deterministic_d  ``d`` (int >= 2)
      poisson          ``mean``
      geometric        ``p``: P(k) = (1 - p)**k p on k >= 0, mean (1 - p)/p
      binomial         ``trials``, ``p``
      table            ``probs``: P(k) for k = 0, 1, ...
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in LAW_KINDS:
            raise ValueError(f"unknown offspring law {self.kind!r}")
        pmf = self._raw_pmf()
        if np.any(pmf < 0) or pmf.sum() <= 0:
            raise ValueError("offspring probabilities must be non-negative and not all zero")
        pmf = pmf / pmf.sum()
        object.__setattr__(self, "pmf", pmf)
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        object.__setattr__(self, "cdf", cdf)
        if not self.mean_d > 1.0:
            raise ValueError("offspring mean must exceed 1 (supercritical law required)")

    @classmethod
    def deterministic(cls, d: int) -> "OffspringLaw":
        return cls("deterministic_d", {"d": int(d)})

    def _raw_pmf(self) -> np.ndarray:
        k = np.arange(MAX_CHILDREN + 1)
        p = self.params
        if self.kind == "deterministic_d":
            d = p.get("d")
            if not isinstance(d, (int, np.integer)) or not 2 <= d <= MAX_CHILDREN:
                raise ValueError("deterministic_d needs an integer d in [2, 64]")
            out = np.zeros(MAX_CHILDREN + 1)
            out[d] = 1.0
            return out
        if self.kind == "poisson":
            lam = float(p["mean"])
            if lam <= 0:
                raise ValueError("poisson mean must be positive")
            return np.exp(k * math.log(lam) - lam - np.array([math.lgamma(i + 1) for i in k]))
        if self.kind == "geometric":
            q = float(p["p"])
            if not 0 < q < 1:
                raise ValueError("geometric p must lie in (0, 1)")
            return q * (1 - q) ** k
        if self.kind == "binomial":
            m, q = int(p["trials"]), float(p["p"])
            if m < 1 or not 0 <= q <= 1:
                raise ValueError("binomial needs trials >= 1 and p in [0, 1]")
            out = np.zeros(MAX_CHILDREN + 1)
            top = min(m, MAX_CHILDREN)
            out[: top + 1] = [math.comb(m, i) * q**i * (1 - q) ** (m - i) for i in range(top + 1)]
            return out
        probs = np.asarray(p["probs"], dtype=float)
        out = np.zeros(MAX_CHILDREN + 1)
        out[: min(probs.size, MAX_CHILDREN + 1)] = probs[: MAX_CHILDREN + 1]
        return out

    @property
    def is_deterministic(self) -> bool:
        return self.kind == "deterministic_d"

    @property
    def d(self) -> int:
        """Fixed branching number, 0 for random laws."""
        return int(self.params["d"]) if self.is_deterministic else 0

    @property
    def mean_d(self) -> float:
        """Closed-form mean of the untruncated law."""
        p = self.params
        if self.kind == "deterministic_d":
            return float(p["d"])
        if self.kind == "poisson":
            return float(p["mean"])
        if self.kind == "geometric":
            return (1.0 - float(p["p"])) / float(p["p"])
        if self.kind == "binomial":
            return int(p["trials"]) * float(p["p"])
        probs = np.asarray(p["probs"], dtype=float)
        return float(np.dot(np.arange(probs.size), probs) / probs.sum())

    @property
    def truncated_mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    def generating_function(self, s: float) -> float:
        return float(np.polynomial.polynomial.polyval(s, self.pmf))

    def survival_probability(self, generations: int) -> float:
        """P(the tree has a vertex at the given generation), truncated law."""
        q = 0.0
        for _ in range(generations):
            q = self.generating_function(q)
        return 1.0 - q

    def extinction_probability(self, tol: float = 1e-14, max_iter: int = 100_000) -> float:
        q = 0.0
        for _ in range(max_iter):
            nq = self.generating_function(q)
            if abs(nq - q) < tol:
                return nq
            q = nq
        return q


@dataclass(frozen=True, order=True)
class VertexAddress:
    """Path of child indices from the root; the root is the empty path."""

    path: tuple[int, ...] = ()

    @property
    def generation(self) -> int:
        return len(self.path)

    def child(self, index: int) -> "VertexAddress":
        return VertexAddress(self.path + (index,))

    def parent(self) -> "VertexAddress":
        if not self.path:
            raise ValueError("the root has no parent")
        return VertexAddress(self.path[:-1])

    def prefix(self, generation: int) -> "VertexAddress":
        return VertexAddress(self.path[:generation])


@dataclass(frozen=True)
class TreeStream:
    """One random tree of a given depth, identified by its seed."""

    law: OffspringLaw
    depth: int
    seed: int
    conditioned: bool = False

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ValueError("depth must be non-negative")


def overlap(x: VertexAddress, y: VertexAddress) -> int:
    """Length of the common prefix (the generation of the last shared vertex)."""
    if x.generation != y.generation:
        raise ValueError("generation mismatch")
    h = 0
    for a, b in zip(x.path, y.path):
        if a != b:
            break
        h += 1
    return h


def pair_count_dary(d: int, n: int, h: int) -> int:
    """Ordered leaf pairs with overlap exactly h in the complete d-ary tree."""
    if d < 2 or n < 0 or not 0 <= h <= n:
        raise ValueError("need d >= 2 and 0 <= h <= n")
    if h == n:
        return d**n
    return d**n * (d - 1) * d ** (n - h - 1)


# ----------------------------------------------------------------------------
# numba helpers shared with the partition kernels

JIT = dict(cache=True, error_model="numpy")


@njit(inline="always", **JIT)
def offspring_count(key, resample, cdf, det_d):
    if det_d > 0:
        return det_d
    u = shape_uniform(key, resample)
    return np.searchsorted(cdf, u, side="right")


@njit(**JIT)
def survives(root, depth, resample, cdf, det_d):
    """Whether the tree shape drawn with this resample index reaches ``depth``."""
    if det_d > 0 or depth == 0:
        return True
    keys = np.empty(depth + 1, dtype=np.uint64)
    nch = np.zeros(depth + 1, dtype=np.int64)
    nxt = np.zeros(depth + 1, dtype=np.int64)
    keys[0] = root
    nch[0] = offspring_count(root, resample, cdf, det_d)
    g = 0
    while g >= 0:
        if nxt[g] < nch[g]:
            c = nxt[g]
            nxt[g] += 1
            k = child_key(keys[g], c)
            if g + 1 == depth:
                return True
            g += 1
            keys[g] = k
            nch[g] = offspring_count(k, resample, cdf, det_d)
            nxt[g] = 0
        else:
            g -= 1
    return False


@njit(**JIT)
def find_resample(root, depth, cdf, det_d, max_tries):
    for r in range(max_tries):
        if survives(root, depth, r, cdf, det_d):
            return r
    return -1


def shape_resample(t: TreeStream, max_tries: int = MAX_RESAMPLES) -> int:
    """Shape-stream index used for the tree: 0 unless survival conditioning resampled it."""
    if not t.conditioned or t.law.is_deterministic or t.depth == 0:
        return 0
    r = find_resample(root_key_of(t.seed), t.depth, t.law.cdf, t.law.d, max_tries)
    if r < 0:
        raise RuntimeError("survival conditioning failed")
    return int(r)


@njit(cache=False, error_model="numpy")
def _leaf_walk(root, depth, resample, cdf, det_d, tag):
    keys = np.empty(depth + 1, dtype=np.uint64)
    nch = np.zeros(depth + 1, dtype=np.int64)
    nxt = np.zeros(depth + 1, dtype=np.int64)
    path = np.zeros(depth, dtype=np.int64)
    draws = np.zeros(depth)
    keys[0] = root
    nch[0] = offspring_count(root, resample, cdf, det_d)
    g = 0
    while g >= 0:
        if nxt[g] < nch[g]:
            c = nxt[g]
            nxt[g] += 1
            path[g] = c
            draws[g] = child_normal(keys[g], c, tag)
            if g + 1 == depth:
                yield path.copy(), draws.copy()
                continue
            k = child_key(keys[g], c)
            g += 1
            keys[g] = k
            nch[g] = offspring_count(k, resample, cdf, det_d)
            nxt[g] = 0
        else:
            g -= 1


def stream_leaves(t: TreeStream) -> Iterator[tuple[VertexAddress, np.ndarray]]:
    """Depth-first iterator over generation-``depth`` vertices and their path draws.

    The draws array holds the Gaussian weight of each non-root vertex on the
    path, generation 1 first.  In conditioned mode the shape is redrawn from
    successive shape substreams until it survives to ``depth``; the Gaussian
    stream is unaffected by resampling.
    """
    if t.depth == 0:
        yield VertexAddress(()), np.zeros(0)
        return
    r = shape_resample(t)
    root = root_key_of(t.seed)
    for path, draws in _leaf_walk(root, t.depth, r, t.law.cdf, t.law.d, GAUSSIAN_TAG):
        yield VertexAddress(tuple(int(c) for c in path)), draws


def leaf_count(t: TreeStream) -> int:
    """Number of generation-``depth`` vertices of the tree."""
    if t.law.is_deterministic or t.depth == 0:
        return t.law.d**t.depth if t.law.is_deterministic else 1
    r = shape_resample(t)
    return int(_count_leaves(root_key_of(t.seed), t.depth, r, t.law.cdf, t.law.d))


@njit(**JIT)
def _count_leaves(root, depth, resample, cdf, det_d):
    keys = np.empty(depth + 1, dtype=np.uint64)
    nch = np.zeros(depth + 1, dtype=np.int64)
    nxt = np.zeros(depth + 1, dtype=np.int64)
    keys[0] = root
    nch[0] = offspring_count(root, resample, cdf, det_d)
    g = 0
    total = 0
    while g >= 0:
        if nxt[g] < nch[g]:
            c = nxt[g]
            nxt[g] += 1
            if g + 1 == depth:
                total += 1
                continue
            g += 1
            keys[g] = child_key(keys[g - 1], c)
            nch[g] = offspring_count(keys[g], resample, cdf, det_d)
            nxt[g] = 0
        else:
            g -= 1
    return total
