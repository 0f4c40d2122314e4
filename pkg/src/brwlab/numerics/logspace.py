"""Log-domain accumulation of positive weights."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

# A log-domain weight: a float, -inf encodes an exact zero.
LogWeight = float


def combine(a: LogWeight, b: LogWeight) -> LogWeight:
    """log(exp(a) + exp(b)) without overflow."""
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log1p(math.exp(b - a))


def log_sum_exp(values: Iterable[float] | np.ndarray) -> LogWeight:
    """log(sum(exp(values))), max-shifted; -inf for an empty input."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return -math.inf
    m = float(v.max())
    if m == -math.inf:
        return -math.inf
    if m == math.inf:
        return math.inf
    return m + math.log(math.fsum(np.exp(v - m)))


class LogSumExpAccumulator:
    """Streaming log-sum-exp that rescales its running sum when the max moves."""

    def __init__(self) -> None:
        self.shift = -math.inf
        self.total = 0.0

    def add(self, value: float) -> None:
        if value == -math.inf:
            return
        if value <= self.shift:
            self.total += math.exp(value - self.shift)
        else:
            self.total = self.total * math.exp(self.shift - value) + 1.0
            self.shift = value

    def extend(self, values: Iterable[float]) -> None:
        for v in values:
            self.add(float(v))

    def value(self) -> LogWeight:
        if self.total == 0.0:
            return -math.inf
        return self.shift + math.log(self.total)
