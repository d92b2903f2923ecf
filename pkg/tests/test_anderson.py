import math
import warnings

import numpy as np
import pytest

from voterpam.anderson import (direct_moment, dual_moment, mark_counts, pinned_moment,
                               sample_marks, sample_walk)
from voterpam.errors import HeavyTail, WindowViolation
from voterpam.kernels import Torus, make_simple_random_walk
from voterpam.rng import Stream
from voterpam.voter import (Bernoulli, VoterConfig, Warmed, evolve, init_field)


def cfg(d=2, L=16, rho=0.5, init=Warmed(8.0)):
    return VoterConfig(Torus(L, d), make_simple_random_walk(d), rho, init)


# ------------------------------------------------------------- walks and marks

def test_frozen_walk():
    for s in range(20):
        w = sample_walk(0.0, 5.0, Stream(s), d=3)
        assert w.jump_count == 0 and not np.any(w.endpoint)


def test_jump_count_mean():
    kappa, t, d, n = 0.7, 3.0, 2, 4000
    J = np.array([sample_walk(kappa, t, Stream.for_replica(1, i), d).jump_count
                  for i in range(n)])
    lam = 2 * d * kappa * t
    assert abs(J.mean() - lam) <= 4 * math.sqrt(lam / n)


def test_walk_steps_and_symmetry():
    n = 4000
    ends = []
    for i in range(n):
        w = sample_walk(1.0, 2.0, Stream.for_replica(2, i), d=2)
        assert np.all(np.abs(np.diff(w.positions, axis=0)).sum(axis=1) == 1)
        assert np.all(np.diff(w.times) > 0) and w.times[-1] <= 2.0
        ends.append(w.endpoint)
    ends = np.array(ends)
    for c in range(2):
        pos, neg = int((ends[:, c] > 0).sum()), int((ends[:, c] < 0).sum())
        assert abs(pos - neg) <= 4 * math.sqrt(pos + neg)
    w = sample_walk(1.0, 2.0, Stream(3), d=2)
    assert np.array_equal(w.at(0.0), [0, 0]) and np.array_equal(w.at(2.0), w.endpoint)
    with pytest.raises(ValueError):
        sample_walk(-1.0, 1.0, Stream(0))


def test_marks_poisson():
    lam, t, n = 0.6, 2.5, 20_000
    c = mark_counts(lam, t, n, 4)
    mu = lam * t
    assert abs(c.mean() - mu) <= 4 * math.sqrt(mu / n)
    # variance of the sample variance for Poisson ~ (mu + 2 mu^2) / n
    assert abs(c.var(ddof=1) - mu) <= 4 * math.sqrt((mu + 2 * mu * mu) / n)
    m = sample_marks(lam, 50.0, Stream(5)).times
    assert np.all(np.diff(m) > 0) and np.all((0 < m) & (m <= 50.0))
    assert len(sample_marks(0.0, 5.0, Stream(5)).times) == 0


# --------------------------------------------------------------- exact integral

def test_piecewise_integral_exact():
    # integrate xi(X(s), t - s) over breakpoints, then audit with 10 midpoints per piece
    c = cfg(L=16, init=Bernoulli())
    t = 3.0
    fld = init_field(c, Stream(7))
    evolve(fld, t)
    walk = sample_walk(1.0, t, Stream(8), d=2)
    pts = set(walk.times.tolist()) | {t}
    for s in walk.times:
        x = np.mod(walk.at(s), 16)
        ft, _ = fld.flips(c.torus.index(x))
        pts |= {t - u for u in ft.tolist() if 0 <= t - u <= t}
    pts = np.array(sorted(pts))

    def integrand(s):
        return fld.value(c.torus.index(np.mod(walk.at(s), 16)), t - s)
    coarse = sum((b - a) * integrand(0.5 * (a + b)) for a, b in zip(pts, pts[1:]))
    fine = 0.0
    for a, b in zip(pts, pts[1:]):
        h = (b - a) / 10
        fine += sum(h * integrand(a + (k + 0.5) * h) for k in range(10))
    assert abs(coarse - fine) < 1e-12


# -------------------------------------------------------------- direct moment

def test_direct_gamma_zero_is_one():
    r = direct_moment(2, 1.0, 0.0, 2.0, cfg(), 500, 3, workers=1)
    assert r.estimate.mean == 1.0 and r.lam == 0.0


def test_direct_all_ones():
    # at rho = 1 - 1e-9 every replica of a 64-site torus starts (and stays) at consensus
    c = cfg(L=8, rho=1 - 1e-9, init=Bernoulli())
    r = direct_moment(2, 1.0, 0.5, 2.0, c, 300, 3, workers=1)
    assert r.estimate.log_mean == pytest.approx(2 * 0.5 * 2.0, abs=1e-12)


@pytest.mark.parametrize("p,kappa,t", [(1, 0.0, 1.0), (2, 1.0, 2.0), (3, 0.5, 1.0)])
def test_direct_sandwich(p, kappa, t):
    r = direct_moment(p, kappa, 1.0, t, cfg(rho=0.4), 4000, 11, workers=1)
    assert 0.4 - 3 * r.lam_se <= r.lam <= 1.0 + 3 * r.lam_se


def test_direct_window_violation():
    with pytest.raises(WindowViolation):
        direct_moment(1, 50.0, 1.0, 2.0, cfg(L=8), 50, 1, window=0, workers=1)
    r = direct_moment(1, 1.0, 1.0, 2.0, cfg(L=8), 2000, 1, window=2, workers=1)
    assert 0 < r.flagged < 2000 and r.estimate.excluded == r.flagged


def test_direct_worker_independent():
    a = direct_moment(2, 1.0, 0.5, 1.0, cfg(), 5000, 4, workers=1)
    b = direct_moment(2, 1.0, 0.5, 1.0, cfg(), 5000, 4, workers=3)
    assert np.array_equal(a.log_weights, b.log_weights)


# ---------------------------------------------------------------- dual moment

def test_dual_gamma_zero():
    r = dual_moment(2, 1.0, 0.0, 0.5, 2.0, 8.0, 200, 1, workers=1)
    assert r.estimate.mean == 1.0 and r.lam == 0.0


def test_dual_fast_walk_sees_average():
    r = dual_moment(1, 200.0, 1.0, 0.5, 0.5, 8.0, 3000, 2, d=3, workers=1)
    assert abs(r.lam - 0.5) < 0.05


def test_dual_heavy_tail_warning():
    with pytest.warns(HeavyTail):
        dual_moment(1, 0.0, 5.0, 0.05, 2.0, 8.0, 4, 3, workers=1)


def test_direct_vs_dual_small():
    a = direct_moment(1, 1.0, 0.5, 1.0, cfg(), 30_000, 21, workers=1)
    b = dual_moment(1, 1.0, 0.5, 0.5, 1.0, 8.0, 30_000, 22, d=2, L=16, workers=1)
    assert abs(a.lam - b.lam) <= 3 * math.hypot(a.lam_se, b.lam_se)


# -------------------------------------------------------------------- pinned

def test_pinned_frozen_equals_direct():
    base = direct_moment(2, 0.0, 0.5, 1.0, cfg(), 2000, 5, workers=1)
    pin = pinned_moment(2, 0.0, 0.5, 1.0, cfg(), 2000, 5, base=base)
    assert pin.site == (0, 0)
    assert pin.estimate.mean == pytest.approx(base.estimate.mean, rel=1e-12)


def test_pinned_below_unpinned():
    base = direct_moment(2, 1.0, 0.5, 1.0, cfg(), 4000, 6, workers=1)
    pin = pinned_moment(2, 1.0, 0.5, 1.0, cfg(), 4000, 6, base=base)
    for est in pin.candidates.values():
        assert est.mean <= base.estimate.mean
    explicit = pinned_moment(2, 1.0, 0.5, 1.0, cfg(), 4000, 6, candidates=[(0, 0)], base=base)
    assert list(explicit.candidates) == [(0, 0)]


def test_pinned_superadditive():
    c = cfg()
    a = pinned_moment(1, 0.5, 0.5, 1.0, c, 20_000, 31)
    b = pinned_moment(1, 0.5, 0.5, 1.0, c, 20_000, 32)
    ab = pinned_moment(1, 0.5, 0.5, 2.0, c, 20_000, 33)
    lhs, rhs = ab.estimate.mean, a.estimate.mean * b.estimate.mean
    se = math.hypot(ab.estimate.std_error,
                    math.hypot(a.estimate.mean * b.estimate.std_error,
                               b.estimate.mean * a.estimate.std_error))
    assert lhs >= rhs - 3 * se
