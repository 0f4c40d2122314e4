"""Closed-form second moments of the normalized partition function."""

from __future__ import annotations

import math

import numpy as np

from ..numerics.logspace import log_sum_exp
from .profiles import as_profile, warn_extreme_beta


def log_second_moment_dary(d: int, n: int, beta: float, profile=None) -> float:
    """log E[Wbar_n**2] on the complete d-ary tree.

    Two leaves with overlap h share h edges, so
    E[Wbar**2] = sum_h P(overlap = h) exp(beta**2 S_h), with
    P(overlap = h) = (d - 1) d**-(h + 1) for h < n and d**-n for h = n.
    """
    if d < 2 or n < 0:
        raise ValueError("need d >= 2 and n >= 0")
    warn_extreme_beta(beta, n)
    s = as_profile(profile, n).prefix
    b2 = beta * beta
    ld = math.log(d)
    h = np.arange(n)
    terms = math.log((d - 1) / d) - h * ld + b2 * s[:n]
    return log_sum_exp(np.append(terms, -n * ld + b2 * s[n]))


def exact_second_moment_dary(d: int, n: int, beta: float, profile=None) -> float:
    return math.exp(log_second_moment_dary(d, n, beta, profile))
