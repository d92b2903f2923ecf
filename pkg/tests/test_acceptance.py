"""End-to-end acceptance checks, one verdict line per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) before it
asserts, so the summary is complete even when a criterion fails.
"""
import math
import time
import warnings

import numpy as np

from conftest import record
from voterpam import cli
from voterpam.anderson import direct_moment, dual_moment
from voterpam.coalescing import (BlockConfig, LatticePath, block_inequality_check,
                                 calibrate_C_eps, correlation_dual, delta_of_K,
                                 k_good_deficiency, meeting_decay, pair_correlation_closed_form)
from voterpam.errors import NotStronglyTransient, PredicateFailure, RecurrentKernel
from voterpam.kernels import Torus, dirichlet_eigenvalue, green_constants, make_simple_random_walk
from voterpam.lyapunov import (clumping_check, curve_from_results, enforce, monotonicity_check,
                               rate_function_I, sandwich_check)
from voterpam.polaron import RadialProfile, dirichlet_energy, scale_optimum, solve_P5
from voterpam.voter import VoterConfig, Warmed, forward_probability, pair_correlation_batch, stabilization_check

W = 1                 # worker threads for the timed runs
RUNS = []             # every stochastic MomentResult, with (gamma, rho), for criterion 3


def verdict(n, title, ok, detail, elapsed):
    record(f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail} ({elapsed:.1f} s)")


def z(a, sa, b, sb):
    return (a - b) / math.hypot(sa, sb)


def test_c01_duality_oracle():
    t0 = time.perf_counter()
    k = make_simple_random_walk(2)
    confs = [[((0, 0), 0.0)],
             [((0, 0), 0.0), ((1, 0), 0.5)],
             [((0, 0), 0.0), ((1, 0), 0.5), ((0, 1), 2.0)]]
    zs, single = [], []
    for rho in (0.3, 0.7):
        cfg = VoterConfig(Torus(16, 2), k, rho, Warmed(8.0))
        for pts in confs:
            fw = forward_probability(cfg, pts, 2.0, 100_000, 5, W)
            dd = correlation_dual(k, pts, rho, 8.0, 2.0, 100_000, 6, L=16, workers=W)
            if len(pts) == 1:
                assert dd.estimate.mean == rho
                single.append(abs(fw.p_hat - rho) / fw.std_error)
            zs.append(abs(z(fw.p_hat, fw.std_error, dd.estimate.mean, dd.estimate.std_error)))
    el = time.perf_counter() - t0
    ok = max(zs) <= 3 and max(single) <= 4 and el <= 120
    verdict(1, "duality oracle", ok, f"max |z| = {max(zs):.2f} over 6 cases, "
            f"n=1 |z| = {max(single):.2f}", el)
    assert ok


def test_c02_representation_oracle():
    t0 = time.perf_counter()
    cfg = VoterConfig(Torus(16, 2), make_simple_random_walk(2), 0.5, Warmed(8.0))
    zs = []
    for kappa in (0.0, 1.0):
        prev = {}
        for p in (1, 2):
            a = direct_moment(p, kappa, 0.5, 2.0, cfg, 200_000, 20 + p, workers=W)
            b = dual_moment(p, kappa, 0.5, 0.5, 2.0, 8.0, 200_000, 30 + p, d=2, L=16,
                            workers=W)
            RUNS.extend([(a, 0.5, 0.5, prev.get("direct")), (b, 0.5, 0.5, prev.get("dual"))])
            prev = {"direct": a, "dual": b}
            zs.append(abs(z(a.lam, a.lam_se, b.lam, b.lam_se)))
    el = time.perf_counter() - t0
    ok = max(zs) <= 3 and el <= 600
    verdict(2, "direct vs dual moments", ok, f"max |z| = {max(zs):.2f} over 4 cells", el)
    assert ok


def test_c04_pair_correlation():
    t0 = time.perf_counter()
    k = make_simple_random_walk(3)
    cfg = VoterConfig(Torus(32, 3), k, 0.5).warmed()
    pairs = [((1, 0, 0), 0.0), ((0, 0, 0), 1.0), ((2, 1, 0), 0.5)]
    res = pair_correlation_batch(cfg, pairs, 1_000_000, 3, W)
    zs = [abs(r.value - pair_correlation_closed_form(k, dl, (0, 0, 0), s, 0.5)) / r.std_error
          for (dl, s), r in zip(pairs, res)]
    st = stabilization_check(cfg, pairs, 1_000_000, 4, W)
    el = time.perf_counter() - t0
    ok = max(zs) <= 3 and st.stable and el <= 300
    drift = max(abs(v) for v in st.z_scores())
    verdict(4, "closed-form pair correlation", ok,
            f"max |z| = {max(zs):.2f}, warm-up T vs 2T max |z| = {drift:.2f}", el)
    assert ok


def test_c05_dichotomy_trend():
    t0 = time.perf_counter()
    c5_runs = {}
    for t in (1.0, 2.0, 4.0):
        c5_runs[(2, 1.0, t)] = dual_moment(1, 1.0, 1.0, 0.5, t, 8.0, 100_000, 7, d=2, workers=W)
    for kappa in (0.0, 16.0):
        c5_runs[(5, kappa, 4.0)] = dual_moment(1, kappa, 1.0, 0.5, 4.0, 8.0, 100_000, 7, d=5,
                                               workers=W)
    RUNS.extend((r, 1.0, 0.5, None) for r in c5_runs.values())
    d2 = [c5_runs[(2, 1.0, t)] for t in (1.0, 2.0, 4.0)]
    inc = all(b.lam - a.lam > 0 for a, b in zip(d2, d2[1:]))
    below = all(r.lam <= 1.0 + 3 * r.lam_se for r in d2)
    r0, r16 = c5_runs[(5, 0.0, 4.0)], c5_runs[(5, 16.0, 4.0)]
    sep = r0.ci[0] > r16.ci[1]
    lo, hi = 0.5, 0.5 + 0.2 * 0.5
    slack = 0.2 * (hi - lo)
    in_band = lo - slack <= r16.lam <= hi + slack
    el = time.perf_counter() - t0
    ok = inc and below and sep and in_band
    verdict(5, "dichotomy trend", ok,
            "d=2 Lambda(1,2,4) = " + ", ".join(f"{r.lam:.3f}" for r in d2)
            + f"; d=5 lambda(0) = {r0.lam:.4f}, lambda(16) = {r16.lam:.4f} in "
              f"[{lo:g}, {hi:g}]", el)
    if not ok:
        warnings.warn("dichotomy trend not met at desk scale")
    assert ok


def test_c06_clumping():
    t0 = time.perf_counter()
    rs = [dual_moment(1, 0.0, 1.0, 0.5, t, 8.0, 1_000_000, 61, d=5, workers=W)
          for t in (1.0, 2.0, 4.0)]
    RUNS.extend((r, 1.0, 0.5, None) for r in rs)
    curve = curve_from_results(rs, 0.0, 1.0, 0.5, 5)
    rep = clumping_check(curve, 0.1)
    el = time.perf_counter() - t0
    ok = rep.passed and rep.detail["excludes_zero"] and el <= 300
    verdict(6, "clumping lower bound", ok,
            f"gap {rep.detail['gap']:.4f} vs required {rep.detail['required']:.5f} "
            f"(sigma {rep.sigma:.1e})", el)
    assert ok


def test_c03_sandwich_and_monotone():
    # every run recorded by the other criteria, plus a p = 1, 2, 3 ladder of its own
    t0 = time.perf_counter()
    own = []
    for d, kappa in ((2, 0.0), (5, 1.0)):
        prev = None
        for p in (1, 2, 3):
            r = dual_moment(p, kappa, 1.0, 0.3, 2.0, 8.0, 100_000, 70 + d, d=d, workers=W)
            own.append((r, 1.0, 0.3, prev))
            prev = r
    reps = []
    for r, g, rho, prev in RUNS + own:
        reps.append(sandwich_check(r, g, rho))
        if prev is not None:
            reps.append(monotonicity_check(prev, r))
    try:
        enforce(reps)
        ok = True
    except PredicateFailure:
        ok = False
    worst = min(x.margin + 3 * x.sigma for x in reps)
    el = time.perf_counter() - t0
    verdict(3, "sandwich and monotonicity in p", ok,
            f"{len(reps)} hard predicates, min slack {worst:.3g}", el)
    assert ok


def test_c07_analytic_suite():
    t0 = time.perf_counter()
    checks = {}
    checks["I(1)=0, I(e)=1"] = rate_function_I(1.0) == 0.0 and rate_function_I(math.e) == 1.0
    ds = [delta_of_K(K) for K in (2, 4, 8, 16)]
    checks["delta decreasing"] = all(b < a for a, b in zip(ds, ds[1:]))
    checks["delta(16)/delta(2) < 1e-3"] = ds[3] / ds[0] < 1e-3
    k5 = make_simple_random_walk(5)
    a, b = green_constants(k5, n=16), green_constants(k5, n=32)
    checks["G5 doubling"] = abs(a.g - b.g) < 1e-6 and abs(a.g_star - b.g_star) < 1e-6
    for d in (1, 2):
        try:
            green_constants(make_simple_random_walk(d))
            checks[f"d={d} recurrent"] = False
        except RecurrentKernel:
            checks[f"d={d} recurrent"] = True
    for d in (3, 4):
        try:
            green_constants(make_simple_random_walk(d), star=True)
            checks[f"d={d} G* infinite"] = False
        except NotStronglyTransient:
            checks[f"d={d} G* infinite"] = True
    checks["singleton eigenvalue"] = all(
        dirichlet_eigenvalue((1,) * d, 0.7) == -2 * d * 0.7 for d in range(1, 6))
    el = time.perf_counter() - t0
    ok = all(checks.values()) and el <= 60
    bad = [k for k, v in checks.items() if not v]
    verdict(7, "analytic formulas", ok, f"{len(checks) - len(bad)}/{len(checks)} identities"
            + (f", failed: {bad}" if bad else ""), el)
    assert ok


def test_c08_polaron():
    t0 = time.perf_counter()
    res = solve_P5()
    _, own = scale_optimum(res.profile)
    g = RadialProfile.from_function(lambda r: np.exp(-r * r / 2), 10.0, 2001)
    dg = dirichlet_energy(g) / g.norm ** 2
    el = time.perf_counter() - t0
    ok = (res.p5_lower_bound > 0 and abs(own - res.p5_lower_bound) <= 1e-8
          and res.p5_lower_bound >= res.gaussian_value - 1e-8 and abs(dg - 2.5) <= 1e-4
          and el <= 180)
    verdict(8, "polaron variational bound", ok,
            f"P5 >= {res.p5_lower_bound:.6e} (Gaussian {res.gaussian_value:.6e}), "
            f"|F* - C^2/4D| = {abs(own - res.p5_lower_bound):.1e}, Gaussian D = {dg:.6f}", el)
    assert ok


def test_c09_bound_suite():
    t0 = time.perf_counter()
    k = make_simple_random_walk(5)
    defs = [k_good_deficiency(k, K, 64, 100_000, 1, W) for K in (3.0, 6.0)]
    fit = meeting_decay(k, [1, 2, 4, 8, 16], 200_000, 2, workers=W)
    C = calibrate_C_eps(fit, 8.0, 0.5)
    blocks = []
    for sets in [((0.0,), (1.0,)), ((0.0, 0.5), (2.0, 2.5)), ((0.0,), (1.0,), (3.0,))]:
        bc = BlockConfig(LatticePath.constant(5), sets, 0.5, 8.0, 2.0, 2.0, 0.5, C)
        blocks.append(block_inequality_check(k, bc, 50.0, 100_000, 3, W))
    el = time.perf_counter() - t0
    ok = (all(d.passes for d in defs) and fit.exponent >= 1 and all(b.passes for b in blocks)
          and el <= 600)
    verdict(9, "coalescence bound suite", ok,
            "deficiency " + ", ".join(f"K={d.K:g}: {d.prob.p_hat:.2e} <= {d.delta:.2e}"
                                      for d in defs)
            + f"; decay exponent {fit.exponent:.3f} +- {fit.exponent_se:.3f}; "
              f"blocks {sum(b.passes for b in blocks)}/3 with C_eps = {C:.4f}", el)
    assert ok


def test_c10_reproducibility(tmp_path):
    t0 = time.perf_counter()
    runs = {
        "duality": ["duality-check", "--points", "0,0@0;1,0@0.5;0,1@2", "--rho", "0.3",
                    "--t", "2", "--T", "8", "--L", "16", "--forward", "--replicas", "1e5"],
        "moment": ["moment", "--mode", "direct", "--p", "2", "--kappa", "1", "--L", "16",
                   "--replicas", "20000", "--emit-csv"],
        "dichotomy": ["dichotomy", "--kappas", "0,16", "--replicas", "1e5"],
    }
    same = []
    for name, args in runs.items():
        blobs = []
        for w in (1, 4):
            out = tmp_path / f"{name}-{w}"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rc = cli.main(["--seed", "42", "--workers", str(w), "--out-dir", str(out), *args])
            assert rc == 0
            blobs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        same.append(blobs[0] == blobs[1] and len(blobs[0]) > 0)
    el = time.perf_counter() - t0
    ok = all(same)
    verdict(10, "byte-identical CSVs across worker counts", ok,
            f"{sum(same)}/{len(same)} commands identical with 1 vs 4 workers", el)
    assert ok
