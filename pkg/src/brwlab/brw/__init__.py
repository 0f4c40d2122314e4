"""Partition functions, variance profiles, exact moments and tilted pair walks."""

from .moments import exact_second_moment_dary, log_second_moment_dary
from .partition import (ReplicaBatch, ReplicaOutcome, derivative_martingale, partition_pair,
                        simulate_replicas)
from .profiles import (BarrierSpec, CriticalConstants, ProfileSpec, VarianceProfile, critical_constants,
                       grid_values)
from .tilt import TiltedPairResult, girsanov_shift, tilted_pair_walk

__all__ = [
    "BarrierSpec", "CriticalConstants", "ProfileSpec", "ReplicaBatch", "ReplicaOutcome", "TiltedPairResult",
    "VarianceProfile", "critical_constants", "derivative_martingale", "exact_second_moment_dary",
    "girsanov_shift", "grid_values", "log_second_moment_dary", "partition_pair", "simulate_replicas",
    "tilted_pair_walk",
]
