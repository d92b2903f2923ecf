"""Pure-Python fallback for the compiled core.

Every routine here mirrors ``_core.pyx`` draw for draw: the same random
numbers are consumed in the same order, so both backends return identical
results for identical seeds. This module is the readable reference; the
compiled module is what makes desk-scale runs feasible.
"""
from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np

from .rng import child_seed, next_double, seed_state

INF = math.inf


def _expo(s, rate):
    return -math.log(1.0 - next_double(s)) / rate


def _uindex(s, n):
    k = int(next_double(s) * n)
    return k if k < n else n - 1


def _alias(s, K, aprob, aalias):
    x = next_double(s) * K
    j = int(x)
    if j >= K:
        j = K - 1
    return j if (x - j) < aprob[j] else aalias[j]


def _bernoulli(xi, rho, s):
    for i in range(len(xi)):
        xi[i] = 1 if next_double(s) < rho else 0


def _lin(c, L):
    idx = 0
    for v in c:
        idx = idx * L + (v % L)
    return idx


# ---------------------------------------------------------------- voter model

def _voter_run(xi, src, K, aprob, aalias, duration, s):
    N = len(xi)
    t = 0.0
    while True:
        t += _expo(s, N)
        if t > duration:
            return
        y = _uindex(s, N)
        k = _alias(s, K, aprob, aalias)
        xi[y] = xi[src[y][k]]


def voter_evolve(xi, src, aprob, aalias, duration, state, log):
    """Evolve ``xi`` in place for ``duration``; optionally log every flip."""
    s = [int(v) for v in state]
    src_l = src.tolist()
    ap = aprob.tolist()
    aa = aalias.tolist()
    K = len(ap)
    N = len(xi)
    x = xi.tolist()
    times, sites, values = [], [], []
    n_events = 0
    t = 0.0
    while True:
        t += _expo(s, N)
        if t > duration:
            break
        y = _uindex(s, N)
        k = _alias(s, K, ap, aa)
        n_events += 1
        v = x[src_l[y][k]]
        if v != x[y]:
            x[y] = v
            if log:
                times.append(t)
                sites.append(y)
                values.append(v)
    xi[:] = x
    state[:] = np.array(s, dtype=np.uint64)
    return (n_events, np.array(times, dtype=np.float64),
            np.array(sites, dtype=np.int64), np.array(values, dtype=np.uint8))


def voter_queries(N, src, aprob, aalias, rho, warm, ck_times, q_sites, q_ck,
                  master, start, stop):
    src_l = src.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    K = len(ap)
    cks = list(ck_times)
    qs = list(q_sites)
    qc = list(q_ck)
    out = np.zeros((stop - start, len(qs)), dtype=np.uint8)
    for r in range(start, stop):
        s = seed_state(child_seed(master, r))
        xi = [0] * N
        _bernoulli(xi, rho, s)
        if warm > 0:
            _voter_run(xi, src_l, K, ap, aa, warm, s)
        prev = 0.0
        for c, tc in enumerate(cks):
            if tc > prev:
                _voter_run(xi, src_l, K, ap, aa, tc - prev, s)
                prev = tc
            for q in range(len(qs)):
                if qc[q] == c:
                    out[r - start, q] = xi[qs[q]]
    return out


def voter_pair_products(N, src, aprob, aalias, rho, warm, lags, shift, pair_lag,
                        master, start, stop):
    src_l = src.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    K = len(ap)
    P = shift.shape[0]
    sh = shift.tolist()
    pl = list(pair_lag)
    out = np.zeros((stop - start, P), dtype=np.float64)
    for r in range(start, stop):
        s = seed_state(child_seed(master, r))
        xi = [0] * N
        _bernoulli(xi, rho, s)
        if warm > 0:
            _voter_run(xi, src_l, K, ap, aa, warm, s)
        base = [v - rho for v in xi]
        prev = 0.0
        for c, lag in enumerate(lags):
            if lag > prev:
                _voter_run(xi, src_l, K, ap, aa, lag - prev, s)
                prev = lag
            for p in range(P):
                if pl[p] != c:
                    continue
                row = sh[p]
                acc = 0.0
                for x in range(N):
                    acc += (xi[row[x]] - rho) * base[x]
                out[r - start, p] = acc / N
    return out


def voter_occupation_single(xi, src, aprob, aalias, site, t_end, state):
    """Occupation time of ``site`` over [0, t_end], accumulated event by event."""
    s = [int(v) for v in state]
    src_l = src.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    x = xi.tolist()
    occ = _occupation(x, src_l, len(ap), ap, aa, site, t_end, s)
    xi[:] = x
    state[:] = np.array(s, dtype=np.uint64)
    return occ


def _occupation(xi, src, K, aprob, aalias, site, t_end, s):
    N = len(xi)
    occ = 0.0
    last = 0.0
    val = xi[site]
    t = 0.0
    while True:
        t += _expo(s, N)
        if t > t_end:
            break
        y = _uindex(s, N)
        k = _alias(s, K, aprob, aalias)
        v = xi[src[y][k]]
        if y == site and v != val:
            if val:
                occ += t - last
            last = t
            val = v
        xi[y] = v
    if val:
        occ += t_end - last
    return occ


def voter_occupation(N, src, aprob, aalias, rho, warm, site, t_end, master, start, stop):
    src_l = src.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    K = len(ap)
    out = np.zeros(stop - start, dtype=np.float64)
    for r in range(start, stop):
        s = seed_state(child_seed(master, r))
        xi = [0] * N
        _bernoulli(xi, rho, s)
        if warm > 0:
            _voter_run(xi, src_l, K, ap, aa, warm, s)
        out[r - start] = _occupation(xi, src_l, K, ap, aa, site, t_end, s)
    return out


def voter_persistence(N, src, aprob, aalias, rho, warm, qmask, t_end, master, start, stop):
    src_l = src.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    K = len(ap)
    qm = qmask.tolist()
    qsites = [i for i in range(N) if qm[i]]
    out = np.zeros(stop - start, dtype=np.uint8)
    for r in range(start, stop):
        s = seed_state(child_seed(master, r))
        xi = [0] * N
        _bernoulli(xi, rho, s)
        if warm > 0:
            _voter_run(xi, src_l, K, ap, aa, warm, s)
        ok = all(xi[q] == 1 for q in qsites)
        t = 0.0
        while ok:
            t += _expo(s, N)
            if t > t_end:
                break
            y = _uindex(s, N)
            k = _alias(s, K, ap, aa)
            v = xi[src_l[y][k]]
            xi[y] = v
            if qm[y] and v == 0:
                ok = False
        out[r - start] = 1 if ok else 0
    return out


# ------------------------------------------------------- coalescing walkers

def _coalesce(L, d, offs, K, aprob, aalias, sites, births, horizon, s,
              traj=None, later=True):
    """Run coalescing walkers; return the number alive at ``horizon``.

    Collisions merge into one slot: the stationary walker's slot is freed and
    the survivor label goes to the mover, so slot layout (and hence the path
    of the counts) does not depend on which label survives.
    """
    n = len(births)
    pos = []
    lab = []
    b = 0
    t = -INF
    coalesced = 0
    while True:
        alive = len(pos)
        if alive == 0:
            if b >= n or births[b] > horizon:
                break
            t = births[b]
            pos.append([v % L for v in sites[b]] if L > 0 else list(sites[b]))
            lab.append(b)
            b += 1
            if traj is not None:
                traj.append((t, len(pos), b))
            continue
        dt = _expo(s, alive)
        if b < n and births[b] <= horizon and t + dt >= births[b]:
            t = births[b]
            c = [v % L for v in sites[b]] if L > 0 else list(sites[b])
            hit = -1
            for j in range(alive):
                if pos[j] == c:
                    hit = j
                    break
            if hit >= 0:
                lab[hit] = max(lab[hit], b) if later else min(lab[hit], b)
                coalesced += 1
            else:
                pos.append(c)
                lab.append(b)
            b += 1
            if traj is not None:
                traj.append((t, len(pos), b))
            continue
        if t + dt > horizon:
            break
        t += dt
        i = _uindex(s, alive)
        k = _alias(s, K, aprob, aalias)
        p = pos[i]
        o = offs[k]
        for a in range(d):
            p[a] += o[a]
            if L > 0:
                p[a] %= L
        for j in range(alive):
            if j != i and pos[j] == p:
                lab[i] = max(lab[i], lab[j]) if later else min(lab[i], lab[j])
                last = alive - 1
                pos[j] = pos[last]
                lab[j] = lab[last]
                pos.pop()
                lab.pop()
                coalesced += 1
                if traj is not None:
                    traj.append((t, len(pos), b))
                break
    return len(pos)


def coalesce_fixed(L, offs, aprob, aalias, sites, births, horizon, master, start, stop):
    d = offs.shape[1]
    ol = offs.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    st = sites.tolist()
    bt = births.tolist()
    out = np.zeros(stop - start, dtype=np.int64)
    for r in range(start, stop):
        s = seed_state(child_seed(master, r))
        out[r - start] = _coalesce(L, d, ol, len(ap), ap, aa, st, bt, horizon, s)
    return out


def coalesce_trajectory(L, offs, aprob, aalias, sites, births, horizon, state, later):
    s = [int(v) for v in state]
    traj = []
    _coalesce(L, offs.shape[1], offs.tolist(), len(aprob), aprob.tolist(),
              aalias.tolist(), sites.tolist(), births.tolist(), horizon, s,
              traj=traj, later=bool(later))
    state[:] = np.array(s, dtype=np.uint64)
    if not traj:
        return (np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    a = np.array(traj)
    return a[:, 0].copy(), a[:, 1].astype(np.int64), a[:, 2].astype(np.int64)


# -------------------------------------------------- parabolic Anderson model

def _walk(d, rate, t_end, window, s):
    times = [0.0]
    pos = [[0] * d]
    viol = False
    if rate > 0:
        tc = 0.0
        cur = [0] * d
        while True:
            tc += _expo(s, rate)
            if tc > t_end:
                break
            j = _uindex(s, 2 * d)
            cur = list(cur)
            a = j >> 1
            cur[a] += 1 if (j & 1) == 0 else -1
            if window >= 0 and abs(cur[a]) > window:
                viol = True
            times.append(tc)
            pos.append(cur)
    return times, pos, viol


def pam_direct(L, d, src, aprob, aalias, rho, warm, p, kappa, gamma, t_end, window,
               master, start, stop):
    N = src.shape[0]
    src_l = src.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    K = len(ap)
    R = stop - start
    logw = np.zeros(R)
    ends = np.zeros((R, p, d), dtype=np.int64)
    flags = np.zeros(R, dtype=np.uint8)
    rate = 2.0 * d * kappa
    for r in range(start, stop):
        s = seed_state(child_seed(master, r))
        xi = [0] * N
        _bernoulli(xi, rho, s)
        if warm > 0:
            _voter_run(xi, src_l, K, ap, aa, warm, s)
        brk, bsite, cur, nb, last, acc = [], [], [], [], [], []
        viol = False
        for q in range(p):
            times, pos, v = _walk(d, rate, t_end, window, s)
            viol = viol or v
            ends[r - start, q, :] = pos[-1]
            # field time tau = t - s; breakpoints in increasing tau
            J = len(times) - 1
            brk.append([t_end - times[j] for j in range(J, 0, -1)])
            bsite.append([_lin(pos[j - 1], L) for j in range(J, 0, -1)])
            cur.append(_lin(pos[J], L))
            nb.append(0)
            last.append(0.0)
            acc.append(0.0)
        tau = 0.0
        while True:
            te = tau + _expo(s, N)
            lim = te if te < t_end else t_end
            for q in range(p):
                bq = brk[q]
                while nb[q] < len(bq) and bq[nb[q]] <= lim:
                    tb = bq[nb[q]]
                    if xi[cur[q]]:
                        acc[q] += tb - last[q]
                    last[q] = tb
                    cur[q] = bsite[q][nb[q]]
                    nb[q] += 1
            if te > t_end:
                break
            tau = te
            y = _uindex(s, N)
            k = _alias(s, K, ap, aa)
            v = xi[src_l[y][k]]
            if v != xi[y]:
                for q in range(p):
                    if cur[q] == y:
                        if xi[y]:
                            acc[q] += tau - last[q]
                        last[q] = tau
                xi[y] = v
        total = 0.0
        for q in range(p):
            if xi[cur[q]]:
                acc[q] += t_end - last[q]
            total += acc[q]
        logw[r - start] = gamma * total
        flags[r - start] = 1 if viol else 0
    return logw, ends, flags


def pam_dual(L, offs, aprob, aalias, rho, T, p, kappa, gamma, t_end, window,
             master, start, stop):
    d = offs.shape[1]
    ol = offs.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    K = len(ap)
    R = stop - start
    ncoal = np.zeros(R, dtype=np.int64)
    nseeds = np.zeros(R, dtype=np.int64)
    ends = np.zeros((R, p, d), dtype=np.int64)
    flags = np.zeros(R, dtype=np.uint8)
    rate = 2.0 * d * kappa
    mrate = rho * gamma
    for r in range(start, stop):
        s = seed_state(child_seed(master, r))
        seeds = []
        viol = False
        for q in range(p):
            times, pos, v = _walk(d, rate, t_end, window, s)
            viol = viol or v
            ends[r - start, q, :] = pos[-1]
            if mrate > 0:
                m = 0.0
                while True:
                    m += _expo(s, mrate)
                    if m > t_end:
                        break
                    seeds.append((m, q, pos[bisect_right(times, m) - 1]))
        seeds.sort(key=lambda e: (e[0], e[1]))
        n = len(seeds)
        nseeds[r - start] = n
        flags[r - start] = 1 if viol else 0
        if n > 1:
            alive = _coalesce(L, d, ol, K, ap, aa, [e[2] for e in seeds],
                              [e[0] for e in seeds], T + t_end, s)
            ncoal[r - start] = n - alive
    return ncoal, nseeds, ends, flags


# ------------------------------------------- single-walker range statistics

def walk_ranges(offs, aprob, aalias, horizon, master, start, stop):
    d = offs.shape[1]
    ol = offs.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    K = len(ap)
    out = np.zeros((stop - start, horizon), dtype=np.int64)
    for r in range(start, stop):
        s = seed_state(child_seed(master, r))
        pos = [0] * d
        tj = _expo(s, 1.0)
        for j in range(horizon):
            visited = [list(pos)]
            while tj <= j + 1:
                o = ol[_alias(s, K, ap, aa)]
                pos = [pos[a] + o[a] for a in range(d)]
                if pos not in visited:
                    visited.append(list(pos))
                tj += _expo(s, 1.0)
            out[r - start, j] = len(visited)
    return out


def meeting_pairs(offs, aprob, aalias, gap, horizon, Kgood, master, start, stop):
    d = offs.shape[1]
    ol = offs.tolist()
    ap, aa = aprob.tolist(), aalias.tolist()
    K = len(ap)
    R = stop - start
    met = np.zeros(R, dtype=np.uint8)
    good = np.zeros(R, dtype=np.uint8)
    v = float(gap)
    jv = math.floor(v)
    for r in range(start, stop):
        s = seed_state(child_seed(master, r))
        U = [0] * d
        t = 0.0
        if v > 0:
            while True:
                dt = _expo(s, 1.0)
                if t + dt >= v:
                    break
                t += dt
                o = ol[_alias(s, K, ap, aa)]
                U = [U[a] + o[a] for a in range(d)]
        V = [0] * d
        m = U == V
        ok = True
        jc = jv
        visited = [list(V)]
        t = v
        while True:
            tn = t + _expo(s, 2.0)
            while jc + 1 <= horizon and tn > jc + 1:
                if len(visited) > Kgood * math.log(jc - jv + 5):
                    ok = False
                jc += 1
                visited = [list(V)]
            if tn > horizon:
                break
            t = tn
            who = _uindex(s, 2)
            o = ol[_alias(s, K, ap, aa)]
            if who == 0:
                U = [U[a] + o[a] for a in range(d)]
            else:
                V = [V[a] + o[a] for a in range(d)]
                if V not in visited:
                    visited.append(list(V))
            if not m and U == V:
                m = True
        met[r - start] = 1 if m else 0
        good[r - start] = 1 if ok else 0
    return met, good
