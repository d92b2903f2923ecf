"""Compiled core vs pure-Python fallback on the simulation kernels.

Each workload runs once per backend on identical inputs; outputs are checked
for bit-identity and the wall times and speedup are printed as a table.

    python benchmarks/bench_core.py [--scale 1.0] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from voterpam import core
from voterpam.kernels import Torus, make_simple_random_walk


def workloads(scale: float):
    n = lambda base: max(1, int(base * scale))
    k2 = make_simple_random_walk(2)
    k5 = make_simple_random_walk(5)
    tor = Torus(16, 2)
    src = tor.source_table(k2)
    p2, a2 = k2.alias_table
    p5, a5 = k5.alias_table
    o2 = np.ascontiguousarray(k2.offsets)
    o5 = np.ascontiguousarray(k5.offsets)
    sites = np.array([[0, 0], [1, 0], [0, 1]], dtype=np.int64)
    births = np.array([0.0, 0.5, 2.0])
    return {
        "voter_occupation": lambda m: m.voter_occupation(
            tor.n_sites, src, p2, a2, 0.5, 8.0, 0, 2.0, 1, 0, n(40)),
        "coalesce_fixed": lambda m: m.coalesce_fixed(
            0, o2, p2, a2, sites, births, 10.0, 2, 0, n(4000)),
        "pam_direct": lambda m: m.pam_direct(
            16, 2, src, p2, a2, 0.5, 8.0, 2, 1.0, 0.5, 2.0, 7, 3, 0, n(40)),
        "pam_dual": lambda m: m.pam_dual(
            0, o2, p2, a2, 0.5, 8.0, 2, 1.0, 0.5, 2.0, -1, 4, 0, n(2000)),
        "walk_ranges": lambda m: m.walk_ranges(o5, p5, a5, 64, 5, 0, n(500)),
        "meeting_pairs": lambda m: m.meeting_pairs(o5, p5, a5, 4.0, 36, 8.0, 6, 0, n(2000)),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def best_time(fn, repeat: int):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiply replica counts")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if core.compiled is None:
        raise SystemExit("compiled core not built; run `pip install -e . --no-build-isolation`")
    fast, slow = core.backend("cython"), core.backend("python")
    print(f"{'kernel':<18} {'cython s':>10} {'python s':>10} {'speedup':>9}  identical")
    for name, job in workloads(args.scale).items():
        tc, rc = best_time(lambda: job(fast), args.repeat)
        tp, rp = best_time(lambda: job(slow), 1)
        print(f"{name:<18} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.0f}x  {_same(rc, rp)}")


if __name__ == "__main__":
    main()
