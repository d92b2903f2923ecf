import math

import numpy as np
import pytest

from voterpam.coalescing import (BlockConfig, CoalescingSystem, LatticePath, WalkerSeed,
                                 alive_counts, block_inequality_check, correlation_dual,
                                 delta_direct, delta_of_K, hitting_weight,
                                 k_good_deficiency, meeting_decay, meeting_probability,
                                 pair_correlation_closed_form, run, set_distance,
                                 unit_ranges)
from voterpam.errors import InvalidDimension, NonConvergent, RecurrentKernel
from voterpam.kernels import green_constants, make_simple_random_walk
from voterpam.rng import Stream

SRW2 = make_simple_random_walk(2)
SRW3 = make_simple_random_walk(3)
SRW5 = make_simple_random_walk(5)


def system(seeds, horizon, k=SRW2, L=0, later=True):
    return CoalescingSystem(tuple(WalkerSeed(b, x) for x, b in seeds), horizon, k, L, later)


# ---------------------------------------------------------------- run

def test_seed_validation():
    with pytest.raises(ValueError):
        WalkerSeed(math.inf, (0, 0))
    with pytest.raises(ValueError):
        system([((0, 0), 1.0), ((0, 1), 0.0)], 2.0)
    with pytest.raises(ValueError):
        system([((0, 0), 3.0)], 2.0)
    with pytest.raises(InvalidDimension):
        system([((0, 0, 0), 0.0)], 2.0)


def test_single_seed_never_coalesces():
    r = run(system([((0, 0), 0.0)], 50.0), Stream(1))
    assert np.all(r.alive == 1) and r.coalesced_count == 0


def test_same_site_same_time_merge():
    r = run(system([((0, 0), 0.0), ((0, 0), 0.0)], 5.0), Stream(1))
    assert r.n_at(5.0) == 1 and r.coalesced_count == 1


def test_small_torus_absorbs():
    k1 = make_simple_random_walk(1)
    for seed in range(50):
        r = run(system([((0,), 0.0), ((2,), 0.0)], 500.0, k1, L=4), Stream(seed))
        assert r.coalesced_count == 1


def test_counting_identity():
    seeds = [((0, 0), 0.0), ((1, 0), 0.3), ((0, 2), 0.5), ((1, 1), 1.0), ((3, 3), 1.2)]
    for s in range(30):
        r = run(system(seeds, 10.0, L=8), Stream(s))
        assert np.all(r.n_coal >= 0) and np.all(np.diff(r.n_coal) >= 0)
        assert np.all(r.alive + r.n_coal == r.born)
        births = np.diff(r.born) > 0
        steps = np.diff(r.alive)
        # a birth onto an occupied site merges in the same event
        assert np.all(np.isin(steps[births], (0, 1))) and np.all(steps[~births] <= 0)


def test_survivor_rule_does_not_change_counts():
    seeds = [((0, 0), 0.0), ((1, 0), 0.2), ((0, 1), 0.4), ((1, 1), 0.6)]
    for s in range(30):
        a = run(system(seeds, 20.0, L=6, later=True), Stream(s))
        b = run(system(seeds, 20.0, L=6, later=False), Stream(s))
        assert np.array_equal(a.alive, b.alive) and a.coalesced_count == b.coalesced_count


# --------------------------------------------------------- correlations

def test_correlation_dual_trivial_cases():
    one = correlation_dual(SRW2, [((0, 0), 0.0)], 0.3, 8.0, 2.0, 10, 1)
    assert one.estimate.mean == 0.3
    same = correlation_dual(SRW2, [((0, 0), 1.0), ((0, 0), 1.0)], 0.3, 8.0, 2.0, 1000, 1)
    assert same.estimate.mean == pytest.approx(0.3) and same.mean_alive == 1.0
    with pytest.raises(ValueError):
        correlation_dual(SRW2, [((0, 0), 3.0)], 0.3, 8.0, 2.0, 10, 1)


def test_correlation_dual_far_apart_is_product():
    pts = [((0, 0, 0), 0.0), ((40, 0, 0), 0.0), ((0, 40, 0), 0.5)]
    res = correlation_dual(SRW3, pts, 0.4, 0.0, 1.0, 2000, 3, L=0, workers=1)
    assert res.estimate.mean == pytest.approx(0.4 ** 3)
    assert res.bracket_low <= res.bracket_high <= 0.4


def test_correlation_dual_monotone_in_T():
    pts = [((0, 0), 0.0), ((1, 0), 0.0), ((0, 2), 0.5)]
    ests = [correlation_dual(SRW2, pts, 0.5, T, 1.0, 5000, 7, workers=1).estimate.mean
            for T in (0.0, 2.0, 8.0, 32.0)]
    assert all(b >= a for a, b in zip(ests, ests[1:]))


def test_alive_counts_are_worker_independent():
    a = alive_counts(SRW2, [(0, 0), (1, 0)], [0.0, 0.0], 4.0, 10_000, 5, workers=1)
    b = alive_counts(SRW2, [(0, 0), (1, 0)], [0.0, 0.0], 4.0, 10_000, 5, workers=3)
    assert np.array_equal(a, b)


def test_closed_form_trivial_cases():
    assert pair_correlation_closed_form(SRW3, (0, 0, 0), (0, 0, 0), 0.0, 0.3) == 0.3 * 0.7
    assert hitting_weight(SRW3, (0, 0, 0)) == 1.0
    with pytest.raises(RecurrentKernel):
        pair_correlation_closed_form(SRW2, (0, 0), (1, 0), 0.0, 0.5)


def test_closed_form_green_ratio():
    # renewal at the origin: G(0) = 1 + G(e_1) for the rate-1 simple random walk
    G0 = green_constants(SRW3, star=False).g
    val, err = pair_correlation_closed_form(SRW3, (1, 0, 0), (0, 0, 0), 0.0, 0.5, True)
    assert abs(val - 0.25 * (1 - 1 / G0)) < 1e-8 and err < 1e-6
    assert abs(hitting_weight(SRW3, (1, 0, 0)) - (1 - 1 / G0)) < 1e-8


def test_closed_form_decreasing():
    vals = [pair_correlation_closed_form(SRW3, (n, 0, 0), (0, 0, 0), 0.5, 0.5) for n in (1, 2, 3)]
    assert vals[0] > vals[1] > vals[2] > 0


# ------------------------------------------------------------- delta(K)

def test_delta_monotone_and_ratio():
    vals = [delta_of_K(K) for K in (2, 4, 8, 16)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert delta_of_K(16) < 1e-3 * delta_of_K(2)


@pytest.mark.parametrize("K", [3.0, 6.0, 8.0, 16.0])
def test_delta_against_direct_sum(K):
    assert delta_of_K(K) == pytest.approx(delta_direct(K), rel=1e-9)


@pytest.mark.parametrize("K", [8.0, 12.0, 16.0])
def test_delta_first_term_dominates(K):
    first = math.exp(-(m := math.floor(K * math.log(5))) * (math.log(m) - 1) - 1)
    assert delta_of_K(K) / first < 1.5


def test_delta_errors():
    with pytest.raises(ValueError):
        delta_of_K(0.0)
    with pytest.raises(NonConvergent):
        delta_of_K(0.1)


# ------------------------------------------------------- K-good walkers

def test_unit_range_mean_at_most_two():
    R = unit_ranges(SRW5, 16, 5000, 3, workers=1)
    assert R.min() >= 1 and R.mean() <= 2.0


def test_deficiency_zero_for_huge_K():
    d = k_good_deficiency(SRW5, 50.0, 32, 2000, 4, workers=1)
    assert d.prob.hits == 0 and d.passes
    with pytest.raises(ValueError):
        k_good_deficiency(SRW5, 3.0, 0, 10, 1)


# ------------------------------------------------------------ meetings

def test_meeting_at_zero_gap_is_certain():
    m = meeting_probability(SRW5, 0.0, 4.0, 1000, 2, workers=1)
    assert m.joint.hits == m.good.hits and m.conditional.p_hat == 1.0


def test_meeting_decreasing_in_gap():
    ps = [meeting_probability(SRW5, g, 9 * g, 20_000, 6, workers=1).conditional.p_hat
          for g in (2.0, 4.0, 8.0)]
    assert ps[0] > ps[1] > ps[2]


def test_meeting_decay_requires_d5():
    with pytest.raises(InvalidDimension):
        meeting_decay(SRW3, [1, 2], 100, 1)


# ---------------------------------------------------------- block bound

def block_cfg(sets, rho=0.5, C=1.0):
    return BlockConfig(LatticePath.constant(5), sets, rho, 8.0, 2.0, 2.0, 0.25, C)


def test_block_config_validation():
    with pytest.raises(ValueError):
        BlockConfig(LatticePath.constant(5), ((0,),), 0.5, 8.0, 2.0, 3.0, 0.25)
    with pytest.raises(ValueError):
        block_cfg(((0, 2), (1,)))
    assert set_distance((0, 0.5), (2, 2.5)) == 1.5


def test_lattice_path():
    p = LatticePath((0.0, 1.0), ((0, 0), (1, 0)))
    assert p(0.5) == (0, 0) and p(1.0) == (1, 0) and p(7.0) == (1, 0)


def test_block_single_block_passes():
    rep = block_inequality_check(SRW5, block_cfg(((0.0, 0.5, 1.0),)), 20.0, 20_000, 3,
                                 workers=1)
    assert rep.passes and rep.lhs.mean <= rep.rhs


def test_block_rho_near_one():
    rep = block_inequality_check(SRW5, block_cfg(((0.0,), (1.0,)), rho=0.999999), 10.0,
                                 2000, 3, workers=1)
    assert rep.lhs.mean == pytest.approx(1.0, abs=1e-5)
    assert rep.rhs == pytest.approx(1.0, abs=1e-3)


def test_block_far_blocks_factorize():
    sets = ((0.0, 0.5), (100.0, 100.5))
    rep = block_inequality_check(SRW5, block_cfg(sets), 20.0, 40_000, 9, workers=1)
    prod = rep.blocks[0]  # r-th moments; recompute plain per-block means instead
    from voterpam.coalescing import _ncoal
    means, ses = [], []
    for j, S in enumerate(sets):
        nc = _ncoal(SRW5, LatticePath.constant(5), S, 120.5, 40_000, 100 + j, 1)
        w = 0.5 ** -nc.astype(float)
        means.append(w.mean())
        ses.append(w.std(ddof=1) / math.sqrt(len(w)))
    prod = means[0] * means[1]
    se = math.hypot(means[0] * ses[1], means[1] * ses[0])
    assert abs(rep.lhs.mean - prod) <= 3 * math.hypot(rep.lhs.std_error, se)
