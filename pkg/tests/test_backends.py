"""The compiled core and the pure-Python reference must agree bit for bit."""
import numpy as np
import pytest

from voterpam import _pycore as P
from voterpam.kernels import Kernel, Torus, make_simple_random_walk


def same(a, b):
    if isinstance(a, tuple):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


@pytest.fixture(scope="module")
def lattice():
    k = make_simple_random_walk(2)
    T = Torus(8, 2)
    prob, alias = k.alias_table
    return k, T, T.source_table(k), prob, alias


def test_evolve(compiled, lattice):
    k, T, src, ap, aa = lattice
    xi = (np.arange(T.n_sites) % 3 == 0).astype(np.uint8)
    x1, x2 = xi.copy(), xi.copy()
    s1 = np.array([1, 2, 3, 4], dtype=np.uint64)
    s2 = s1.copy()
    r1 = P.voter_evolve(x1, src, ap, aa, 3.0, s1, True)
    r2 = compiled.voter_evolve(x2, src, ap, aa, 3.0, s2, True)
    assert same(r1, r2) and same(x1, x2) and same(s1, s2)


def test_voter_kernels(compiled, lattice):
    k, T, src, ap, aa = lattice
    N = T.n_sites
    args = (N, src, ap, aa, 0.4, 2.0, np.array([0.0, 1.0, 1.5]),
            np.array([0, 5, 9], dtype=np.int64), np.array([0, 1, 2], dtype=np.int64), 7, 3, 20)
    assert same(P.voter_queries(*args), compiled.voter_queries(*args))
    sh = np.stack([T.shift_table((0, 0)), T.shift_table((1, 0))])
    args = (N, src, ap, aa, 0.4, 2.0, np.array([0.0, 0.5]), sh,
            np.array([0, 1], dtype=np.int64), 7, 3, 20)
    assert same(P.voter_pair_products(*args), compiled.voter_pair_products(*args))
    args = (N, src, ap, aa, 0.4, 2.0, 5, 4.0, 7, 3, 20)
    assert same(P.voter_occupation(*args), compiled.voter_occupation(*args))
    qm = np.zeros(N, dtype=np.uint8)
    qm[0] = 1
    args = (N, src, ap, aa, 0.8, 1.0, qm, 2.0, 7, 0, 50)
    assert same(P.voter_persistence(*args), compiled.voter_persistence(*args))


@pytest.mark.parametrize("L", [0, 8])
def test_coalescence(compiled, L):
    ks = make_simple_random_walk(3)
    offs = np.ascontiguousarray(ks.offsets)
    ap, aa = ks.alias_table
    sites = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 0]], dtype=np.int64)
    births = np.array([0, 0, 0.5, 1.0])
    args = (L, offs, ap, aa, sites, births, 6.0, 11, 0, 200)
    assert same(P.coalesce_fixed(*args), compiled.coalesce_fixed(*args))
    st = np.array([5, 6, 7, 8], dtype=np.uint64)
    a = P.coalesce_trajectory(max(L, 8), offs, ap, aa, sites, births, 6.0, st.copy(), True)
    b = compiled.coalesce_trajectory(max(L, 8), offs, ap, aa, sites, births, 6.0, st.copy(),
                                     True)
    assert same(a, b)


def test_moment_kernels(compiled, lattice):
    k, T, src, ap, aa = lattice
    args = (8, 2, src, ap, aa, 0.5, 2.0, 2, 1.0, 0.5, 2.0, 3, 9, 0, 40)
    assert same(P.pam_direct(*args), compiled.pam_direct(*args))
    offs = np.ascontiguousarray(k.offsets)
    for L, win in ((8, 3), (0, -1)):
        args = (L, offs, ap, aa, 0.5, 4.0, 2, 1.0, 0.5, 2.0, win, 9, 0, 40)
        assert same(P.pam_dual(*args), compiled.pam_dual(*args))


def test_walk_statistics(compiled):
    ks = make_simple_random_walk(3)
    offs = np.ascontiguousarray(ks.offsets)
    ap, aa = ks.alias_table
    args = (offs, ap, aa, 10, 3, 0, 30)
    assert same(P.walk_ranges(*args), compiled.walk_ranges(*args))
    args = (offs, ap, aa, 2.5, 16, 3.0, 3, 0, 300)
    assert same(P.meeting_pairs(*args), compiled.meeting_pairs(*args))


def test_asymmetric_kernel(compiled):
    k = Kernel([(1, 0), (0, 1), (-1, -1)], [0.5, 0.3, 0.2])
    T = Torus(6, 2)
    ap, aa = k.alias_table
    args = (T.n_sites, T.source_table(k), ap, aa, 0.3, 1.0, 0, 3.0, 5, 0, 30)
    assert same(P.voter_occupation(*args), compiled.voter_occupation(*args))
