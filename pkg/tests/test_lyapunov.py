import math
import warnings

import numpy as np
import pytest

from voterpam.anderson import MomentResult, direct_moment, pinned_moment
from voterpam.errors import AsymptoticCheck, DomainError, PredicateFailure
from voterpam.kernels import Torus, make_simple_random_walk
from voterpam.lyapunov import (LyapunovCurve, clumping_check, continuity_check,
                               curve_checks, curve_from_results, dichotomy_scan, enforce,
                               envelope_M, estimate_lyapunov, fit_extrapolation, gap_check,
                               gap_from_results, intermittency_gap, jensen_bound_check,
                               lipschitz_envelope, monotonicity_check, rate_function_I,
                               run_moment, sandwich_check, slope_checks,
                               superadditivity_check, _report)
from voterpam.stats import from_log_weights
from voterpam.voter import Bernoulli, VoterConfig


def fake(p, t, lam, se=0.01, n=100):
    est = from_log_weights(np.zeros(n), warn=False)
    return MomentResult("dual", p, t, est, lam, se, 0, np.zeros(n), np.zeros(n, np.uint8))


# ---------------------------------------------------------------- envelopes

def test_rate_function_values():
    assert rate_function_I(1.0) == 0.0
    assert rate_function_I(math.e) == 1.0
    with pytest.raises(DomainError):
        rate_function_I(0.5)


def test_rate_function_convex():
    grid = np.linspace(1, 20, 60)
    for a in grid:
        for b in grid[::7]:
            assert rate_function_I((a + b) / 2) <= (rate_function_I(a) + rate_function_I(b)) / 2 + 1e-12


@pytest.mark.parametrize("kappa", [0.01, 0.5, 3.0, 1e3])
def test_envelope_round_trip(kappa):
    M = envelope_M(kappa, 1.0, 0.3, 5)
    assert M > 1
    assert abs(rate_function_I(M) - 0.7 / (10 * kappa)) < 1e-10


def test_envelope_asymptotics():
    ratios = []
    for k in (1e2, 1e4, 1e6):
        M = envelope_M(k, 1.0, 0.5, 5)
        ratios.append((M - 1) * 10 / (10 * math.sqrt(0.5 / (5 * k))))
    errs = [abs(r - 1) for r in ratios]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-4


def test_envelope_decreasing():
    env = lipschitz_envelope([0.5, 1, 2, 4, 8, 16], 1.0, 0.5, 2)
    assert np.all(np.diff(env.M) < 0) and np.all(env.M > 1)
    assert np.allclose(env.upper, (env.M - 1) * 4) and env.lower == -4
    with pytest.raises(ValueError):
        envelope_M(0.0, 1.0, 0.5, 2)


# ------------------------------------------------------------- predicates

def test_report_slack():
    assert _report("x", -0.029, 0.01).passed
    assert not _report("x", -0.031, 0.01).passed
    assert not _report("x", math.nan, 0.01).passed


def test_enforce_hard_and_soft():
    soft = _report("soft", -1.0, 0.0)
    hard = _report("hard", -1.0, 0.0, hard=True)
    with pytest.warns(AsymptoticCheck):
        enforce([soft])
    with pytest.raises(PredicateFailure):
        enforce([hard])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        enforce([_report("ok", 1.0, 0.0, hard=True)])


def test_sandwich_and_monotone_predicates():
    assert sandwich_check(fake(1, 2.0, 0.7), 1.0, 0.5).passed
    r = sandwich_check(fake(1, 2.0, 1.2, se=0.01), 1.0, 0.5)
    assert r.hard and not r.passed
    assert monotonicity_check(fake(1, 2.0, 0.6), fake(2, 2.0, 0.65)).passed
    assert not monotonicity_check(fake(1, 2.0, 0.7), fake(2, 2.0, 0.6)).passed
    with pytest.raises(ValueError):
        monotonicity_check(fake(1, 2.0, 0.6), fake(3, 2.0, 0.6))


def test_slope_and_continuity():
    # an exactly flat curve meets both envelopes
    reps = slope_checks([0.0, 1.0, 4.0], [0.6, 0.6, 0.6], [0.01] * 3, 1.0, 0.5, 5)
    assert len(reps) == 2 and all(r.passed for r in reps)
    steep = slope_checks([1.0, 2.0], [5.0, 0.0], [0.0, 0.0], 1.0, 0.5, 2)
    assert not [r for r in steep if r.name.startswith("slope_lower")][0].passed
    assert continuity_check(0.7, 0.0, 0.6, 0.0, 0.05, 5).passed
    assert not continuity_check(0.7, 0.0, 0.1, 0.0, 0.05, 5).passed


# --------------------------------------------------------------- fitting

def test_fit_recovers_inverse_model():
    t = np.array([1.0, 2.0, 4.0, 8.0])
    y = 0.8 - 0.3 / t
    f = fit_extrapolation(t, y, np.full(4, 0.01))
    assert f.coef[0] == pytest.approx(0.8) and f.residual < 1e-12
    g = fit_extrapolation(t, 0.8 - 0.3 / t + 0.1 * np.log(t) / t, np.full(4, 0.01), "auto")
    assert g.model == "log" and g.coef[0] == pytest.approx(0.8)
    with pytest.raises(ValueError):
        fit_extrapolation(t[:2], y[:2], [0.1, 0.1], "log")


def test_curve_from_results_and_rows():
    res = [fake(1, t, 0.8 - 0.2 / t) for t in (4.0, 1.0, 2.0)]
    c = curve_from_results(res, 0.0, 1.0, 0.5, 2)
    assert list(c.t) == [1.0, 2.0, 4.0]
    assert c.lambda_hat == pytest.approx(0.8)
    rows = list(c.rows())
    assert rows[0]["ci_low"] < rows[0]["lambda_hat"] < rows[0]["ci_high"]
    assert all(r.passed for r in curve_checks(c))


# --------------------------------------------------------------- estimates

def test_estimate_requires_grid():
    with pytest.raises(ValueError):
        estimate_lyapunov(1, 0.0, 1.0, 0.5, 2, [1.0, 2.0])
    with pytest.raises(ValueError):
        run_moment(1, 0.0, 1.0, 0.5, 2, 1.0, 10, 1, estimator="nope")


def test_estimate_gamma_zero():
    c = estimate_lyapunov(1, 1.0, 0.0, 0.5, 2, [1, 2, 3], replicas=200, seed=1, workers=1)
    assert np.all(c.lam == 0.0) and c.lambda_hat == 0.0


def test_estimate_rho_near_one_direct():
    c = estimate_lyapunov(1, 1.0, 0.5, 1 - 1e-9, 2, [1, 2, 3], "direct", 200, 1, T=0.0,
                          L=8, workers=1)
    assert np.allclose(c.lam, 0.5, atol=1e-9)


def test_d2_increasing_in_t():
    c = estimate_lyapunov(1, 1.0, 1.0, 0.5, 2, [1, 2, 4], replicas=20_000, seed=4, workers=1)
    assert c.lam[0] < c.lam[1] < c.lam[2] <= 1.0 + 3 * c.lam_se[2]
    assert all(r.passed for r in curve_checks(c) if r.hard)


def test_clumping_check():
    curve = curve_from_results([fake(1, t, 0.6, 0.005) for t in (1.0, 2.0, 4.0)], 0.0, 1.0,
                               0.5, 5)
    r = clumping_check(curve)
    assert r.detail["required"] == pytest.approx(0.00625) and r.passed
    assert r.detail["excludes_zero"]
    flat = curve_from_results([fake(1, t, 0.5, 0.005) for t in (1.0, 2.0, 4.0)], 0.0, 1e-4,
                              0.5, 5)
    # gamma -> 0: requirement collapses
    assert clumping_check(flat).detail["required"] < 1e-9
    with pytest.raises(ValueError):
        clumping_check(curve_from_results([fake(2, t, 0.6) for t in (1.0, 2.0, 4.0)], 0, 1,
                                          0.5, 5))


def test_intermittency_gap_paired_and_monotone():
    g = intermittency_gap(2, 0.0, 1.0, 0.5, 2, 1.0, 5000, 3, workers=1)
    assert gap_check(g).passed
    with pytest.raises(ValueError):
        intermittency_gap(1, 0.0, 1.0, 0.5, 2, 1.0, 10, 3)


def test_gap_degenerate_medium():
    c = VoterConfig(Torus(8, 2), make_simple_random_walk(2), 1 - 1e-9, Bernoulli())
    a = direct_moment(1, 0.0, 0.5, 1.0, c, 200, 5, workers=1)
    b = direct_moment(2, 0.0, 0.5, 1.0, c, 200, 5, workers=1)
    g = gap_from_results(a, b)
    assert abs(g.value) < 1e-9 and g.paired


def test_jensen_bound():
    r = jensen_bound_check(2, 0.0, 0.5, 0.5, 2, 2.0, 20_000, 8, workers=1)
    assert r.passed
    zero = jensen_bound_check(2, 0.0, 0.0, 0.5, 2, 2.0, 100, 8, workers=1)
    assert zero.margin == 0.0


def test_superadditivity_predicate():
    c = VoterConfig(Torus(16, 2), make_simple_random_walk(2), 0.5)
    ps = [pinned_moment(1, 0.5, 0.5, t, c, 5000, s, workers=1)
          for t, s in ((1.0, 1), (1.0, 2), (2.0, 3))]
    assert superadditivity_check(*ps).passed


def test_dichotomy_scan_shape():
    tab = dichotomy_scan(dims=(5,), kappas=(0.0, 16.0), t=1.0, replicas=5000, seed=2,
                         workers=1)
    assert len(tab.rows) == 2
    assert set(tab.rows[0]) == {"d", "kappa", "p", "t", "lambda_hat", "std_error", "ci_low",
                                "ci_high"}
    lam = tab.column(5, "lambda_hat")
    assert lam[0] > lam[1]
    assert all(r.passed for r in tab.checks if r.hard)
