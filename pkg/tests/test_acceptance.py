"""Acceptance criteria 1-12, each at its stated tolerance; prints one PASS/FAIL line per criterion.

The heavy ones (4 in particular, about an hour on one core) dominate the
suite's runtime.  Deselect with ``-m "not acceptance"`` for a quick run.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from brwlab.brw import BarrierSpec, critical_constants, partition_pair, tilted_pair_walk
from brwlab.cli import main as cli_main
from brwlab.crem_cascade import CremProfile, cascade_measure, crem_beta_c, crem_partition
from brwlab.experiments import (ExperimentConfig, ci_separated, critical_decay_fit, fractional_moment_scan,
                                good_env_mass, kahane_check, l2_threshold, phase_scan_l2, universality_gap)
from brwlab.numerics import EnsembleSummary, replica_seeds
from brwlab.tree import OffspringLaw, TreeStream

pytestmark = pytest.mark.acceptance

D2 = OffspringLaw.deterministic(2)
RUNS: dict[str, object] = {}


def verdict(report, number: int, ok: bool, detail: str, t0: float) -> None:
    report(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t0:.0f} s) {detail}")
    assert ok, detail


def test_criterion_01_critical_constants(report):
    t0 = time.perf_counter()
    c = critical_constants(2)
    ok = abs(c.beta_c - 1.1774100226) <= 1e-9 and abs(c.beta_2 - 0.8325546112) <= 1e-9
    verdict(report, 1, ok, f"beta_c={c.beta_c:.12f} beta_2={c.beta_2:.12f}", t0)


CFG2 = dict(n=(1, 4, 8), beta=(0.3, 0.7, 1.0), replicas=100_000, seed=2002, mc_max_n=8)


def test_criterion_02_second_moment_oracle(report):
    t0 = time.perf_counter()
    worst, fails = 0.0, []
    for profile in ("constant", "linear"):
        res = phase_scan_l2(ExperimentConfig(profile=profile, **CFG2))
        RUNS[f"c2-{profile}"] = res.rows()
        for n in CFG2["n"]:
            for beta in CFG2["beta"]:
                mc = res.summary(n, beta, "second_moment_mc")
                exact = res[n, beta, "second_moment_exact"]
                z = abs(mc.mean - exact) / mc.stderr if mc.stderr > 0 else (0.0 if mc.mean == exact else math.inf)
                worst = max(worst, z)
                if z > 4:
                    fails.append(f"{profile} n={n} beta={beta} z={z:.2f}")
    verdict(report, 2, not fails, f"max |MC - exact|/stderr = {worst:.2f} {'; '.join(fails)}", t0)


def test_criterion_03_l2_bracket(report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for d in (2, 3):
        lo, hi = l2_threshold(d, 24)
        rel = 0.5 * (lo + hi) / math.sqrt(math.log(d)) - 1
        ok &= abs(rel) < 0.05
        parts.append(f"d={d}: beta_hat={0.5 * (lo + hi):.5f} ({100 * rel:+.2f}%)")
    verdict(report, 3, ok, "; ".join(parts), t0)


def test_criterion_04_universality_gap(report):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(n=(8, 16, 24), beta=(0.9,), replicas=10_000, profile="linear", seed=2004)
    res = universality_gap(cfg)
    s = dict(res.series(0.9, "gap"))
    means = [s[n].mean for n in (8, 16, 24)]
    ok = means[0] > means[1] > means[2] and ci_separated(s[24], s[8])
    detail = ", ".join(f"n={n}: {s[n].mean:.4f} [{s[n].ci[0]:.4f}, {s[n].ci[1]:.4f}]" for n in (8, 16, 24))
    verdict(report, 4, ok, detail, t0)


def test_criterion_05_strong_disorder(report):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(n=(24,), beta=(2.0,), a=0.673, replicas=500, profile="constant", seed=2005)
    s = fractional_moment_scan(cfg).summary(24, 2.0, "Wbar^a")
    verdict(report, 5, s.mean < 0.05, f"E[Wbar^a] at n=24 = {s.mean:.4g} +/- {s.stderr:.2g}", t0)


@pytest.mark.parametrize("profile", ["constant", "linear"])
def test_criterion_06_critical_decay(report, profile):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(n=(8, 12, 16, 20, 24), replicas=200, profile=profile, seed=2006)
    cd = critical_decay_fit(cfg)
    spread = cd.scaled_spread(3)
    ok = -0.80 <= cd.slope <= -0.25 and spread < 2.0
    verdict(report, 6, ok, f"[{profile}] slope={cd.slope:.3f} sqrt(n)-median spread over 16..24 = {spread:.3f}", t0)


def test_criterion_07_kahane(report):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(n=(16,), beta=(1.0,), a=0.5, replicas=100_000, profile="linear", seed=2007)
    rec = kahane_check(cfg)[0][0]
    verdict(report, 7, rec.passed, f"E[Wbar^a]={rec.mean_bar:.5f} E[W^a]={rec.mean_hom:.5f} "
                                   f"diff={rec.difference:.5f} stderr={rec.stderr:.5f}", t0)


def test_criterion_08_girsanov(report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for h in (0, 4, 8):
        r = tilted_pair_walk(16, h, 0.9, "linear", BarrierSpec(1.2, 2), 100_000, 2008 + h)
        good = r.shared_mean == r.shared_expected if h == 0 else abs(r.shared_mean - r.shared_expected) <= 4 * r.shared_stderr
        ok &= good
        parts.append(f"h={h}: {r.shared_mean:.4f} vs {r.shared_expected:.4f}")
    verdict(report, 8, ok, "; ".join(parts), t0)


CFG9 = dict(n=(16,), beta=(0.9,), alpha=1.2, n0=(2, 6, 12), replicas=10_000, profile="constant", seed=2009)


def test_criterion_09_good_environment(report):
    t0 = time.perf_counter()
    res = good_env_mass(ExperimentConfig(**CFG9))
    RUNS["c9"] = res.rows()
    k = [res.summary(16, 0.9, f"K[n0={n0}]") for n0 in (2, 6, 12)]
    ok = k[0].mean > k[1].mean > k[2].mean and ci_separated(k[2], k[0])
    verdict(report, 9, ok, ", ".join(f"E[K] n0={n0}: {s.mean:.4f}" for n0, s in zip((2, 6, 12), k)), t0)


def test_criterion_10_crem(report):
    t0 = time.perf_counter()
    identity = CremProfile()
    seeds = [int(s) for s in replica_seeds(2010, 200)]
    bitwise = all(crem_partition(n, b, identity, s) == partition_pair(TreeStream(D2, n, s), b).log_W
                  for s in seeds for n, b in ((12, 0.5), (16, 1.1), (8, 2.0)))
    concave = CremProfile.piecewise([(0, 0), (0.5, 1), (1, 1)])
    z = EnsembleSummary.of([math.exp(crem_partition(12, 0.5, concave, int(s))) for s in replica_seeds(2011, 10_000)])
    unit = abs(z.mean - 1) <= 4 * z.stderr
    bc = crem_beta_c(identity) == critical_constants(2).beta_c
    verdict(report, 10, bitwise and unit and bc,
            f"bitwise={bitwise} E[Z_12]={z.mean:.4f} +/- {z.stderr:.4f} beta_c match={bc}", t0)


def test_criterion_11_cascade(report):
    t0 = time.perf_counter()
    seeds = replica_seeds(2012, 10_000)
    mass, refine = [], True
    for i, s in enumerate(seeds):
        mu = cascade_measure(12, 0.8, int(s))
        mass.append(math.exp(mu.log_total))
        if i < 50:
            for k in range(12):
                fine = mu.coarsen(k + 1)
                refine &= bool(np.array_equal(mu.coarsen(k), np.logaddexp(fine[0::2], fine[1::2])))
    m = EnsembleSummary.of(mass)
    ok = abs(m.mean - 1) <= 4 * m.stderr and refine
    verdict(report, 11, ok, f"mean mass={m.mean:.4f} +/- {m.stderr:.4f} refinement exact={refine}", t0)


def test_criterion_12_reproducibility(report, tmp_path):
    t0 = time.perf_counter()
    same = True
    if "c2-linear" in RUNS:
        same &= phase_scan_l2(ExperimentConfig(profile="linear", **CFG2)).rows() == RUNS["c2-linear"]
    if "c9" in RUNS:
        same &= good_env_mass(ExperimentConfig(**CFG9)).rows() == RUNS["c9"]
    outs = []
    for i in range(2):
        p = tmp_path / f"run{i}.csv"
        code = cli_main(["phase-scan", "--n", "1,4,8", "--beta", "0.3,0.7,1.0", "--replicas", "20000",
                         "--profile", "linear", "--seed", "2012", "--out", str(p), "--quiet"])
        outs.append((code, p.read_bytes()))
    same &= outs[0][0] == 0 and outs[0] == outs[1]
    verdict(report, 12, same, f"in-process reruns and CLI CSV bytes identical={same}", t0)
