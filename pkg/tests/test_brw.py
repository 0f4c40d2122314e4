from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from brwlab.brw import (BarrierSpec, ProfileSpec, VarianceProfile, critical_constants, derivative_martingale,
                        exact_second_moment_dary, girsanov_shift, grid_values, log_second_moment_dary,
                        partition_pair, simulate_replicas, tilted_pair_walk)
from brwlab.brw import kernels as K
from brwlab.brw.profiles import grid_tolerance
from brwlab.numerics import SplitKey, children_gaussians, log_sum_exp
from brwlab.tree import OffspringLaw, TreeStream, stream_leaves

D2 = OffspringLaw.deterministic(2)


def brute_force(t: TreeStream, beta: float, profile: VarianceProfile, barrier: BarrierSpec | None = None):
    """Partition functions by explicit enumeration of leaves and their path draws."""
    n = t.depth
    f = profile.values
    s = profile.prefix
    ld = math.log(t.law.mean_d)
    lw, lwb, lj, ljb, dsum = [], [], [], [], 0.0
    for _, g in stream_leaves(t):
        H = np.cumsum(g)
        Hb = np.cumsum(np.sqrt(f) * g)
        lw.append(beta * H[-1] if n else 0.0)
        lwb.append(beta * Hb[-1] if n else 0.0)
        v = lw[-1] - 0.5 * beta * beta * n
        dsum += v * math.exp(v)
        if barrier is not None:
            T = np.arange(1, n + 1)
            m = T >= max(barrier.n0, 1)
            if np.all(H[m] < barrier.alpha * T[m]):
                lj.append(lw[-1])
            if np.all(Hb[m] < barrier.alpha * s[1:][m]):
                ljb.append(lwb[-1])
    out = {
        "log_W": log_sum_exp(lw) - n * ld - 0.5 * beta * beta * n,
        "log_Wbar": log_sum_exp(lwb) - n * ld - 0.5 * beta * beta * profile.total,
        "D_n": dsum * math.exp(-n * ld),
    }
    if barrier is not None:
        out["log_J"] = log_sum_exp(lj) - n * ld - 0.5 * beta * beta * n
        out["log_Jbar"] = log_sum_exp(ljb) - n * ld - 0.5 * beta * beta * profile.total
    return out


# ---------------------------------------------------------------- profiles and constants


def test_critical_constants_binary():
    c = critical_constants(2)
    assert c.beta_c == pytest.approx(1.1774100226, abs=1e-9)
    assert c.beta_2 == pytest.approx(0.8325546112, abs=1e-9)
    with pytest.raises(ValueError, match="subcritical"):
        critical_constants(1.0)


def test_profile_kinds():
    assert np.all(ProfileSpec.parse("constant").at(5).values == 1)
    lin = ProfileSpec.parse("linear").at(4)
    assert np.allclose(lin.values, [0.75, 0.5, 0.25, 0.0])
    assert np.allclose(lin.prefix, [0, 0.75, 1.25, 1.5, 1.5])
    assert lin.scales.size == 5 and lin.scales[0] == 0


def test_profile_table_file(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("0 1\n0.5 0.5\n1 0.2\n")
    prof = ProfileSpec.parse(f"table:{p}").at(4)
    assert np.allclose(prof.values, [0.75, 0.5, 0.35, 0.2])


def test_profile_validation():
    with pytest.raises(ValueError):
        grid_values([1.0, 1.2])
    with pytest.raises(ValueError):
        grid_values([0.1] * 100)
    assert grid_tolerance(16) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ProfileSpec.parse("quadratic")


# ---------------------------------------------------------------- kernels vs oracles


def test_vectorized_growth_matches_addressed_draws():
    P, d = 5, 3
    keys = np.array([SplitKey(9, (i,)).key() for i in range(P)], dtype=np.uint64)
    cH, cHb = np.empty(P * d), np.empty(P * d)
    K._grow(keys, np.zeros(P), np.zeros(P), np.empty(P * d, dtype=np.uint64), cH, cHb, P, d, 1.0)
    for p in range(P):
        expect = children_gaussians(SplitKey(9, (p,)), d)
        assert np.array_equal(cH[np.arange(d) * P + p], expect)


@pytest.mark.parametrize("law, n", [
    (OffspringLaw.deterministic(2), 9),
    (OffspringLaw.deterministic(3), 6),
    (OffspringLaw("poisson", {"mean": 1.8}), 7),
    (OffspringLaw("table", {"probs": [0.1, 0.2, 0.3, 0.4]}), 6),
])
@pytest.mark.parametrize("profile", ["constant", "linear"])
def test_partition_matches_brute_force(law, n, profile):
    barrier = BarrierSpec(1.0, 2)
    for seed in range(3):
        t = TreeStream(law, n, seed, conditioned=True)
        prof = ProfileSpec.parse(profile).at(n)
        got = partition_pair(t, 0.8, prof, barrier)
        want = brute_force(t, 0.8, prof, barrier)
        for k in ("log_W", "log_Wbar", "log_J", "log_Jbar"):
            assert getattr(got, k) == pytest.approx(want[k], abs=1e-12, rel=1e-12), k


def test_block_and_depth_first_paths_agree():
    t = TreeStream(D2, 12, 4)
    a = partition_pair(t, 1.0, "linear", BarrierSpec(1.1, 3), block_levels=0)
    b = partition_pair(t, 1.0, "linear", BarrierSpec(1.1, 3), block_levels=8)
    for k in ("log_W", "log_Wbar", "log_J", "log_Jbar"):
        assert getattr(a, k) == pytest.approx(getattr(b, k), abs=1e-12)


def test_derivative_martingale_matches_brute_force():
    t = TreeStream(OffspringLaw.deterministic(3), 6, 5)
    bc = critical_constants(3).beta_c
    want = brute_force(t, bc, VarianceProfile.constant(6))["D_n"]
    assert derivative_martingale(t) == pytest.approx(want, rel=1e-10)
    assert math.isnan(partition_pair(t, 0.5).D_n)


def test_depth_zero_partition_is_one():
    out = partition_pair(TreeStream(D2, 0, 1), 0.7)
    assert out.log_W == 0.0 and out.log_Wbar == 0.0


def test_constant_profile_gives_identical_fields():
    b = simulate_replicas(D2, 8, 0.9, 50, 3, profile="constant")
    assert np.array_equal(b.log_W, b.log_Wbar)


def test_barrier_limits():
    t = TreeStream(D2, 10, 2)
    vac = partition_pair(t, 0.9, "linear", BarrierSpec(1.2, 11))
    assert vac.log_K == -math.inf and vac.log_J == vac.log_W
    loose = partition_pair(t, 0.9, "linear", BarrierSpec(math.inf, 0))
    assert loose.log_J == loose.log_W and loose.log_Jbar == loose.log_Wbar


@given(st.integers(0, 2**63), st.floats(0.0, 2.0), st.floats(0.3, 3.0), st.integers(0, 9))
@settings(max_examples=40, deadline=None)
def test_restricted_mass_never_exceeds_total(seed, beta, alpha, n0):
    o = partition_pair(TreeStream(D2, 9, seed), beta, "linear", BarrierSpec(alpha, n0))
    assert o.log_J <= o.log_W and o.log_Jbar <= o.log_Wbar


def test_replicas_independent_of_chunking():
    whole = simulate_replicas(D2, 10, 0.8, 20, 99, profile="linear")
    a = simulate_replicas(D2, 10, 0.8, 8, 99, profile="linear")
    b = simulate_replicas(D2, 10, 0.8, 12, 99, profile="linear", first=8)
    assert np.array_equal(whole.log_Wbar, np.concatenate([a.log_Wbar, b.log_Wbar]))
    assert np.array_equal(whole.seeds, np.concatenate([a.seeds, b.seeds]))
    one = partition_pair(TreeStream(D2, 10, int(whole.seeds[3])), 0.8, "linear")
    assert one.log_Wbar == whole.log_Wbar[3]


def test_homogeneous_partition_has_unit_mean():
    b = simulate_replicas(D2, 10, 0.5, 20_000, 5)
    w = b.W
    assert abs(w.mean() - 1) < 4 * w.std(ddof=1) / math.sqrt(w.size)


def test_negative_beta_rejected():
    with pytest.raises(ValueError):
        partition_pair(TreeStream(D2, 3, 0), -0.1)


# ---------------------------------------------------------------- second moment


def test_second_moment_one_generation_closed_form():
    assert exact_second_moment_dary(2, 1, 1.0) == pytest.approx((1 + math.e) / 2, abs=1e-12)
    assert exact_second_moment_dary(2, 0, 1.0) == 1.0


def test_second_moment_one_generation_by_quadrature():
    beta = 0.7
    gauss = integrate.quad(lambda x: math.exp(2 * beta * x - beta**2 - x * x / 2) / math.sqrt(2 * math.pi),
                           -40, 40)[0]
    assert exact_second_moment_dary(2, 1, beta) == pytest.approx(0.25 * (2 * gauss + 2), rel=1e-10)


@pytest.mark.parametrize("d, n", [(2, 4), (3, 3)])
@pytest.mark.parametrize("profile", ["constant", "linear"])
def test_second_moment_by_pair_enumeration(d, n, profile):
    beta = 0.9
    prof = ProfileSpec.parse(profile).at(n)
    leaves = [a.path for a, _ in stream_leaves(TreeStream(OffspringLaw.deterministic(d), n, 0))]
    total = 0.0
    for x in leaves:
        for y in leaves:
            h = next((i for i, (a, b) in enumerate(zip(x, y)) if a != b), n)
            total += math.exp(beta**2 * prof.prefix[h])
    assert exact_second_moment_dary(d, n, beta, prof) == pytest.approx(total / d ** (2 * n), rel=1e-12)


def test_second_moment_stable_in_log_space():
    assert math.isfinite(log_second_moment_dary(2, 2000, 3.0))


# ---------------------------------------------------------------- tilting


def test_girsanov_shift_against_importance_weights():
    rng = np.random.default_rng(0)
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    mu = np.array([0.3, -0.2])
    alpha = np.array([0.4, 0.1])
    x = rng.multivariate_normal(mu, cov, 400_000)
    w = np.exp(x @ alpha)
    est = (w[:, None] * x).sum(0) / w.sum()
    assert np.allclose(est, girsanov_shift(cov, mu, alpha), atol=0.02)


def test_girsanov_shift_rejects_bad_covariance():
    with pytest.raises(ValueError):
        girsanov_shift([[1, 2], [2, 1]], [0, 0], [1, 1])
    with pytest.raises(ValueError):
        girsanov_shift([[1, 0.5], [0.1, 1]], [0, 0], [1, 1])


@pytest.mark.parametrize("h", [0, 4, 8])
def test_tilted_shared_segment_mean(h):
    r = tilted_pair_walk(16, h, 0.9, "linear", BarrierSpec(1.2, 2), 20_000, 7)
    if h == 0:
        assert r.shared_mean == 0.0 and r.shared_expected == 0.0
    else:
        assert abs(r.shared_mean - r.shared_expected) < 4 * r.shared_stderr
    assert r.ci_lo <= r.probability <= r.ci_hi


def test_tilted_probability_non_increasing_in_depth():
    ps = [tilted_pair_walk(n, 4, 0.9, "constant", BarrierSpec(2.0, 1), 5000, 3).probability for n in (6, 10, 14)]
    assert ps[0] >= ps[1] >= ps[2]
