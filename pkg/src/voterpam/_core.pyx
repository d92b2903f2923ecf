# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Draw-for-draw identical to ``_pycore``."""
from libc.math cimport log, floor, fabs
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memcpy
from libc.stdint cimport uint64_t, int64_t, uint8_t

import numpy as np

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0
cdef double INF = float("inf")

ctypedef struct Rng:
    uint64_t s0, s1, s2, s3


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t child_seed(uint64_t master, int64_t index) noexcept nogil:
    return mix64(mix64(master) + <uint64_t>(index + 1) * GOLDEN)


cdef inline void seed_rng(Rng* r, uint64_t seed) noexcept nogil:
    cdef uint64_t x = seed
    x += GOLDEN
    r.s0 = mix64(x)
    x += GOLDEN
    r.s1 = mix64(x)
    x += GOLDEN
    r.s2 = mix64(x)
    x += GOLDEN
    r.s3 = mix64(x)


cdef inline uint64_t next_u64(Rng* r) noexcept nogil:
    cdef uint64_t x = r.s1 * 5
    cdef uint64_t res = ((x << 7) | (x >> 57)) * 9
    cdef uint64_t t = r.s1 << 17
    r.s2 ^= r.s0
    r.s3 ^= r.s1
    r.s1 ^= r.s2
    r.s0 ^= r.s3
    r.s2 ^= t
    r.s3 = (r.s3 << 45) | (r.s3 >> 19)
    return res


cdef inline double next_double(Rng* r) noexcept nogil:
    return <double>(next_u64(r) >> 11) * TWO_M53


cdef inline double expo(Rng* r, double rate) noexcept nogil:
    return -log(1.0 - next_double(r)) / rate


cdef inline int64_t uindex(Rng* r, int64_t n) noexcept nogil:
    cdef int64_t k = <int64_t>(next_double(r) * <double>n)
    if k >= n:
        k = n - 1
    return k


cdef inline int64_t alias_draw(Rng* r, int64_t K, const double* ap, const int64_t* aa) noexcept nogil:
    cdef double x = next_double(r) * <double>K
    cdef int64_t j = <int64_t>x
    if j >= K:
        j = K - 1
    if (x - <double>j) < ap[j]:
        return j
    return aa[j]


cdef inline int64_t wrap(int64_t v, int64_t L) noexcept nogil:
    v = v % L
    if v < 0:
        v += L
    return v


cdef inline int64_t lin(const int64_t* c, int64_t d, int64_t L) noexcept nogil:
    cdef int64_t idx = 0, a
    for a in range(d):
        idx = idx * L + wrap(c[a], L)
    return idx


cdef void load_state(Rng* r, uint64_t[::1] st) noexcept nogil:
    r.s0 = st[0]; r.s1 = st[1]; r.s2 = st[2]; r.s3 = st[3]


cdef void store_state(Rng* r, uint64_t[::1] st) noexcept nogil:
    st[0] = r.s0; st[1] = r.s1; st[2] = r.s2; st[3] = r.s3


cdef inline void bernoulli(uint8_t* xi, int64_t N, double rho, Rng* r) noexcept nogil:
    cdef int64_t i
    for i in range(N):
        xi[i] = 1 if next_double(r) < rho else 0


cdef void voter_run(uint8_t* xi, int64_t N, const int64_t* src, int64_t K,
                    const double* ap, const int64_t* aa, double duration, Rng* r) noexcept nogil:
    cdef double t = 0.0
    cdef int64_t y, k
    while True:
        t += expo(r, <double>N)
        if t > duration:
            return
        y = uindex(r, N)
        k = alias_draw(r, K, ap, aa)
        xi[y] = xi[src[y * K + k]]


# ---------------------------------------------------------------- voter model

def voter_evolve(uint8_t[::1] xi, const int64_t[:, ::1] src, const double[::1] aprob, const int64_t[::1] aalias,
                 double duration, uint64_t[::1] state, bint log_flips):
    cdef Rng r
    cdef int64_t N = xi.shape[0], K = aprob.shape[0]
    cdef int64_t y, k, n_events = 0, n_log = 0, cap = 1024
    cdef uint8_t v
    cdef double t = 0.0
    cdef double* lt = <double*>malloc(cap * sizeof(double))
    cdef int64_t* ls = <int64_t*>malloc(cap * sizeof(int64_t))
    cdef uint8_t* lv = <uint8_t*>malloc(cap * sizeof(uint8_t))
    load_state(&r, state)
    with nogil:
        while True:
            t += expo(&r, <double>N)
            if t > duration:
                break
            y = uindex(&r, N)
            k = alias_draw(&r, K, &aprob[0], &aalias[0])
            n_events += 1
            v = xi[src[y, k]]
            if v != xi[y]:
                xi[y] = v
                if log_flips:
                    if n_log == cap:
                        cap *= 2
                        lt = <double*>realloc(lt, cap * sizeof(double))
                        ls = <int64_t*>realloc(ls, cap * sizeof(int64_t))
                        lv = <uint8_t*>realloc(lv, cap * sizeof(uint8_t))
                    lt[n_log] = t
                    ls[n_log] = y
                    lv[n_log] = v
                    n_log += 1
        store_state(&r, state)
    times = np.empty(n_log, dtype=np.float64)
    sites = np.empty(n_log, dtype=np.int64)
    values = np.empty(n_log, dtype=np.uint8)
    cdef double[::1] tv = times
    cdef int64_t[::1] sv = sites
    cdef uint8_t[::1] vv = values
    cdef int64_t i
    for i in range(n_log):
        tv[i] = lt[i]
        sv[i] = ls[i]
        vv[i] = lv[i]
    free(lt); free(ls); free(lv)
    return n_events, times, sites, values


def voter_queries(int64_t N, const int64_t[:, ::1] src, const double[::1] aprob, const int64_t[::1] aalias,
                  double rho, double warm, const double[::1] ck_times, const int64_t[::1] q_sites,
                  const int64_t[::1] q_ck, uint64_t master, int64_t start, int64_t stop):
    cdef int64_t K = aprob.shape[0], C = ck_times.shape[0], Q = q_sites.shape[0]
    out = np.zeros((stop - start, Q), dtype=np.uint8)
    cdef uint8_t[:, ::1] o = out
    cdef uint8_t* xi = <uint8_t*>malloc(N)
    cdef Rng r
    cdef int64_t rep, c, q
    cdef double prev
    with nogil:
        for rep in range(start, stop):
            seed_rng(&r, child_seed(master, rep))
            bernoulli(xi, N, rho, &r)
            if warm > 0:
                voter_run(xi, N, &src[0, 0], K, &aprob[0], &aalias[0], warm, &r)
            prev = 0.0
            for c in range(C):
                if ck_times[c] > prev:
                    voter_run(xi, N, &src[0, 0], K, &aprob[0], &aalias[0], ck_times[c] - prev, &r)
                    prev = ck_times[c]
                for q in range(Q):
                    if q_ck[q] == c:
                        o[rep - start, q] = xi[q_sites[q]]
    free(xi)
    return out


def voter_pair_products(int64_t N, const int64_t[:, ::1] src, const double[::1] aprob, const int64_t[::1] aalias,
                        double rho, double warm, const double[::1] lags, const int64_t[:, ::1] shift,
                        const int64_t[::1] pair_lag, uint64_t master, int64_t start, int64_t stop):
    cdef int64_t K = aprob.shape[0], P = shift.shape[0], C = lags.shape[0]
    out = np.zeros((stop - start, P), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef uint8_t* xi = <uint8_t*>malloc(N)
    cdef double* base = <double*>malloc(N * sizeof(double))
    cdef Rng r
    cdef int64_t rep, c, p, x
    cdef double prev, acc
    with nogil:
        for rep in range(start, stop):
            seed_rng(&r, child_seed(master, rep))
            bernoulli(xi, N, rho, &r)
            if warm > 0:
                voter_run(xi, N, &src[0, 0], K, &aprob[0], &aalias[0], warm, &r)
            for x in range(N):
                base[x] = xi[x] - rho
            prev = 0.0
            for c in range(C):
                if lags[c] > prev:
                    voter_run(xi, N, &src[0, 0], K, &aprob[0], &aalias[0], lags[c] - prev, &r)
                    prev = lags[c]
                for p in range(P):
                    if pair_lag[p] != c:
                        continue
                    acc = 0.0
                    for x in range(N):
                        acc += (xi[shift[p, x]] - rho) * base[x]
                    o[rep - start, p] = acc / N
    free(xi)
    free(base)
    return out


cdef double occupation(uint8_t* xi, int64_t N, const int64_t* src, int64_t K, const double* ap,
                       const int64_t* aa, int64_t site, double t_end, Rng* r) noexcept nogil:
    cdef double occ = 0.0, last = 0.0, t = 0.0
    cdef uint8_t val = xi[site], v
    cdef int64_t y, k
    while True:
        t += expo(r, <double>N)
        if t > t_end:
            break
        y = uindex(r, N)
        k = alias_draw(r, K, ap, aa)
        v = xi[src[y * K + k]]
        if y == site and v != val:
            if val:
                occ += t - last
            last = t
            val = v
        xi[y] = v
    if val:
        occ += t_end - last
    return occ


def voter_occupation_single(uint8_t[::1] xi, const int64_t[:, ::1] src, const double[::1] aprob,
                            const int64_t[::1] aalias, int64_t site, double t_end, uint64_t[::1] state):
    cdef Rng r
    cdef double occ
    load_state(&r, state)
    with nogil:
        occ = occupation(&xi[0], xi.shape[0], &src[0, 0], aprob.shape[0], &aprob[0],
                         &aalias[0], site, t_end, &r)
        store_state(&r, state)
    return occ


def voter_occupation(int64_t N, const int64_t[:, ::1] src, const double[::1] aprob, const int64_t[::1] aalias,
                     double rho, double warm, int64_t site, double t_end,
                     uint64_t master, int64_t start, int64_t stop):
    cdef int64_t K = aprob.shape[0]
    out = np.zeros(stop - start, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint8_t* xi = <uint8_t*>malloc(N)
    cdef Rng r
    cdef int64_t rep
    with nogil:
        for rep in range(start, stop):
            seed_rng(&r, child_seed(master, rep))
            bernoulli(xi, N, rho, &r)
            if warm > 0:
                voter_run(xi, N, &src[0, 0], K, &aprob[0], &aalias[0], warm, &r)
            o[rep - start] = occupation(xi, N, &src[0, 0], K, &aprob[0], &aalias[0],
                                        site, t_end, &r)
    free(xi)
    return out


def voter_persistence(int64_t N, const int64_t[:, ::1] src, const double[::1] aprob, const int64_t[::1] aalias,
                      double rho, double warm, const uint8_t[::1] qmask, double t_end,
                      uint64_t master, int64_t start, int64_t stop):
    cdef int64_t K = aprob.shape[0]
    out = np.zeros(stop - start, dtype=np.uint8)
    cdef uint8_t[::1] o = out
    cdef uint8_t* xi = <uint8_t*>malloc(N)
    cdef Rng r
    cdef int64_t rep, i, y, k
    cdef bint ok
    cdef double t
    cdef uint8_t v
    with nogil:
        for rep in range(start, stop):
            seed_rng(&r, child_seed(master, rep))
            bernoulli(xi, N, rho, &r)
            if warm > 0:
                voter_run(xi, N, &src[0, 0], K, &aprob[0], &aalias[0], warm, &r)
            ok = True
            for i in range(N):
                if qmask[i] and xi[i] != 1:
                    ok = False
                    break
            t = 0.0
            while ok:
                t += expo(&r, <double>N)
                if t > t_end:
                    break
                y = uindex(&r, N)
                k = alias_draw(&r, K, &aprob[0], &aalias[0])
                v = xi[src[y, k]]
                xi[y] = v
                if qmask[y] and v == 0:
                    ok = False
            o[rep - start] = 1 if ok else 0
    free(xi)
    return out


# ------------------------------------------------------- coalescing walkers

ctypedef struct TrajBuf:
    double* t
    int64_t* alive
    int64_t* born
    int64_t n, cap


cdef inline void traj_push(TrajBuf* tb, double t, int64_t alive, int64_t born) noexcept nogil:
    if tb == NULL:
        return
    if tb.n == tb.cap:
        tb.cap = 2 * tb.cap + 16
        tb.t = <double*>realloc(tb.t, tb.cap * sizeof(double))
        tb.alive = <int64_t*>realloc(tb.alive, tb.cap * sizeof(int64_t))
        tb.born = <int64_t*>realloc(tb.born, tb.cap * sizeof(int64_t))
    tb.t[tb.n] = t
    tb.alive[tb.n] = alive
    tb.born[tb.n] = born
    tb.n += 1


cdef inline bint same_site(const int64_t* a, const int64_t* b, int64_t d) noexcept nogil:
    cdef int64_t i
    for i in range(d):
        if a[i] != b[i]:
            return False
    return True


cdef int64_t coalesce(int64_t L, int64_t d, const int64_t* offs, int64_t K, const double* ap,
                      const int64_t* aa, const int64_t* sites, const double* births, int64_t n,
                      double horizon, Rng* r, int64_t* pos, int64_t* lab, TrajBuf* tb,
                      bint later) noexcept nogil:
    # pos/lab are caller buffers of capacity n*d and n
    cdef int64_t alive = 0, b = 0, i, j, a, hit, last, k
    cdef double t = -INF, dt
    cdef int64_t c[64]
    while True:
        if alive == 0:
            if b >= n or births[b] > horizon:
                break
            t = births[b]
            for a in range(d):
                pos[a] = wrap(sites[b * d + a], L) if L > 0 else sites[b * d + a]
            lab[0] = b
            alive = 1
            b += 1
            traj_push(tb, t, alive, b)
            continue
        dt = expo(r, <double>alive)
        if b < n and births[b] <= horizon and t + dt >= births[b]:
            t = births[b]
            for a in range(d):
                c[a] = wrap(sites[b * d + a], L) if L > 0 else sites[b * d + a]
            hit = -1
            for j in range(alive):
                if same_site(&pos[j * d], c, d):
                    hit = j
                    break
            if hit >= 0:
                if later:
                    lab[hit] = lab[hit] if lab[hit] > b else b
                else:
                    lab[hit] = lab[hit] if lab[hit] < b else b
            else:
                for a in range(d):
                    pos[alive * d + a] = c[a]
                lab[alive] = b
                alive += 1
            b += 1
            traj_push(tb, t, alive, b)
            continue
        if t + dt > horizon:
            break
        t += dt
        i = uindex(r, alive)
        k = alias_draw(r, K, ap, aa)
        for a in range(d):
            pos[i * d + a] += offs[k * d + a]
            if L > 0:
                pos[i * d + a] = wrap(pos[i * d + a], L)
        for j in range(alive):
            if j != i and same_site(&pos[j * d], &pos[i * d], d):
                if later:
                    lab[i] = lab[i] if lab[i] > lab[j] else lab[j]
                else:
                    lab[i] = lab[i] if lab[i] < lab[j] else lab[j]
                last = alive - 1
                for a in range(d):
                    pos[j * d + a] = pos[last * d + a]
                lab[j] = lab[last]
                alive -= 1
                traj_push(tb, t, alive, b)
                break
    return alive


def coalesce_fixed(int64_t L, const int64_t[:, ::1] offs, const double[::1] aprob, const int64_t[::1] aalias,
                   const int64_t[:, ::1] sites, const double[::1] births, double horizon,
                   uint64_t master, int64_t start, int64_t stop):
    cdef int64_t d = offs.shape[1], n = births.shape[0], K = aprob.shape[0]
    if d > 64:
        raise ValueError("dimension above 64 not supported")
    out = np.zeros(stop - start, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef int64_t m = n if n > 0 else 1
    cdef int64_t* pos = <int64_t*>malloc(m * d * sizeof(int64_t))
    cdef int64_t* lab = <int64_t*>malloc(m * sizeof(int64_t))
    cdef Rng r
    cdef int64_t rep
    cdef const int64_t* sp = &sites[0, 0] if n > 0 else NULL
    cdef const double* bp = &births[0] if n > 0 else NULL
    with nogil:
        for rep in range(start, stop):
            seed_rng(&r, child_seed(master, rep))
            o[rep - start] = coalesce(L, d, &offs[0, 0], K, &aprob[0], &aalias[0], sp, bp, n,
                                      horizon, &r, pos, lab, NULL, True)
    free(pos)
    free(lab)
    return out


def coalesce_trajectory(int64_t L, const int64_t[:, ::1] offs, const double[::1] aprob, const int64_t[::1] aalias,
                        const int64_t[:, ::1] sites, const double[::1] births, double horizon,
                        uint64_t[::1] state, bint later):
    cdef int64_t d = offs.shape[1], n = births.shape[0], K = aprob.shape[0]
    if d > 64:
        raise ValueError("dimension above 64 not supported")
    cdef int64_t m = n if n > 0 else 1
    cdef int64_t* pos = <int64_t*>malloc(m * d * sizeof(int64_t))
    cdef int64_t* lab = <int64_t*>malloc(m * sizeof(int64_t))
    cdef TrajBuf tb
    tb.n = 0
    tb.cap = 0
    tb.t = NULL
    tb.alive = NULL
    tb.born = NULL
    cdef Rng r
    load_state(&r, state)
    cdef const int64_t* sp = &sites[0, 0] if n > 0 else NULL
    cdef const double* bp = &births[0] if n > 0 else NULL
    with nogil:
        coalesce(L, d, &offs[0, 0], K, &aprob[0], &aalias[0], sp, bp, n, horizon, &r,
                 pos, lab, &tb, later)
        store_state(&r, state)
    times = np.empty(tb.n, dtype=np.float64)
    alive = np.empty(tb.n, dtype=np.int64)
    born = np.empty(tb.n, dtype=np.int64)
    cdef int64_t i
    for i in range(tb.n):
        times[i] = tb.t[i]
        alive[i] = tb.alive[i]
        born[i] = tb.born[i]
    free(tb.t); free(tb.alive); free(tb.born)
    free(pos); free(lab)
    return times, alive, born


# -------------------------------------------------- parabolic Anderson model

ctypedef struct Path:
    double* t
    int64_t* x      # positions, row-major [n, d]
    int64_t n, cap


cdef inline void path_reset(Path* P, int64_t d) noexcept nogil:
    cdef int64_t a
    P.n = 1
    P.t[0] = 0.0
    for a in range(d):
        P.x[a] = 0


cdef inline void path_push(Path* P, int64_t d, double t) noexcept nogil:
    # appends a copy of the last position at time t
    cdef int64_t a
    if P.n == P.cap:
        P.cap *= 2
        P.t = <double*>realloc(P.t, P.cap * sizeof(double))
        P.x = <int64_t*>realloc(P.x, P.cap * d * sizeof(int64_t))
    P.t[P.n] = t
    for a in range(d):
        P.x[P.n * d + a] = P.x[(P.n - 1) * d + a]
    P.n += 1


cdef bint walk(Path* P, int64_t d, double rate, double t_end, int64_t window, Rng* r) noexcept nogil:
    cdef bint viol = False
    cdef double tc = 0.0
    cdef int64_t j, a
    path_reset(P, d)
    if rate > 0:
        while True:
            tc += expo(r, rate)
            if tc > t_end:
                break
            j = uindex(r, 2 * d)
            path_push(P, d, tc)
            a = j >> 1
            if (j & 1) == 0:
                P.x[(P.n - 1) * d + a] += 1
            else:
                P.x[(P.n - 1) * d + a] -= 1
            if window >= 0 and (P.x[(P.n - 1) * d + a] > window or P.x[(P.n - 1) * d + a] < -window):
                viol = True
    return viol


cdef Path* paths_new(int64_t p, int64_t d) noexcept nogil:
    cdef Path* P = <Path*>malloc(p * sizeof(Path))
    cdef int64_t q
    for q in range(p):
        P[q].cap = 64
        P[q].n = 0
        P[q].t = <double*>malloc(64 * sizeof(double))
        P[q].x = <int64_t*>malloc(64 * d * sizeof(int64_t))
    return P


cdef void paths_free(Path* P, int64_t p) noexcept nogil:
    cdef int64_t q
    for q in range(p):
        free(P[q].t)
        free(P[q].x)
    free(P)


def pam_direct(int64_t L, int64_t d, const int64_t[:, ::1] src, const double[::1] aprob, const int64_t[::1] aalias,
               double rho, double warm, int64_t p, double kappa, double gamma, double t_end,
               int64_t window, uint64_t master, int64_t start, int64_t stop):
    cdef int64_t N = src.shape[0], K = aprob.shape[0], R = stop - start
    logw_a = np.zeros(R, dtype=np.float64)
    ends_a = np.zeros((R, p, d), dtype=np.int64)
    flags_a = np.zeros(R, dtype=np.uint8)
    cdef double[::1] logw = logw_a
    cdef int64_t[:, :, ::1] ends = ends_a
    cdef uint8_t[::1] flags = flags_a
    cdef uint8_t* xi = <uint8_t*>malloc(N)
    cdef Path* P = paths_new(p, d)
    cdef int64_t* cur = <int64_t*>malloc(p * sizeof(int64_t))
    cdef int64_t* nb = <int64_t*>malloc(p * sizeof(int64_t))
    cdef double* last = <double*>malloc(p * sizeof(double))
    cdef double* acc = <double*>malloc(p * sizeof(double))
    cdef Rng r
    cdef int64_t rep, q, a, J, jj, y, k
    cdef bint viol
    cdef double rate = 2.0 * d * kappa, tau, te, lim, tb, total
    cdef uint8_t v
    with nogil:
        for rep in range(start, stop):
            seed_rng(&r, child_seed(master, rep))
            bernoulli(xi, N, rho, &r)
            if warm > 0:
                voter_run(xi, N, &src[0, 0], K, &aprob[0], &aalias[0], warm, &r)
            viol = False
            for q in range(p):
                if walk(&P[q], d, rate, t_end, window, &r):
                    viol = True
                J = P[q].n - 1
                for a in range(d):
                    ends[rep - start, q, a] = P[q].x[J * d + a]
                cur[q] = lin(&P[q].x[J * d], d, L)
                nb[q] = 0
                last[q] = 0.0
                acc[q] = 0.0
            tau = 0.0
            while True:
                te = tau + expo(&r, <double>N)
                lim = te if te < t_end else t_end
                for q in range(p):
                    J = P[q].n - 1
                    while nb[q] < J:
                        # nb-th break in field time is t_end - t[J - nb]
                        jj = J - nb[q]
                        tb = t_end - P[q].t[jj]
                        if tb > lim:
                            break
                        if xi[cur[q]]:
                            acc[q] += tb - last[q]
                        last[q] = tb
                        cur[q] = lin(&P[q].x[(jj - 1) * d], d, L)
                        nb[q] += 1
                if te > t_end:
                    break
                tau = te
                y = uindex(&r, N)
                k = alias_draw(&r, K, &aprob[0], &aalias[0])
                v = xi[src[y, k]]
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
            logw[rep - start] = gamma * total
            flags[rep - start] = 1 if viol else 0
    free(xi)
    paths_free(P, p)
    free(cur); free(nb); free(last); free(acc)
    return logw_a, ends_a, flags_a


def pam_dual(int64_t L, const int64_t[:, ::1] offs, const double[::1] aprob, const int64_t[::1] aalias,
             double rho, double T, int64_t p, double kappa, double gamma, double t_end,
             int64_t window, uint64_t master, int64_t start, int64_t stop):
    cdef int64_t d = offs.shape[1], K = aprob.shape[0], R = stop - start
    if d > 64:
        raise ValueError("dimension above 64 not supported")
    ncoal_a = np.zeros(R, dtype=np.int64)
    nseeds_a = np.zeros(R, dtype=np.int64)
    ends_a = np.zeros((R, p, d), dtype=np.int64)
    flags_a = np.zeros(R, dtype=np.uint8)
    cdef int64_t[::1] ncoal = ncoal_a
    cdef int64_t[::1] nseeds = nseeds_a
    cdef int64_t[:, :, ::1] ends = ends_a
    cdef uint8_t[::1] flags = flags_a
    cdef Path* P = paths_new(1, d)
    cdef int64_t scap = 64
    cdef double* st = <double*>malloc(scap * sizeof(double))
    cdef int64_t* sq = <int64_t*>malloc(scap * sizeof(int64_t))
    cdef int64_t* sx = <int64_t*>malloc(scap * d * sizeof(int64_t))
    cdef int64_t* pos = <int64_t*>malloc(scap * d * sizeof(int64_t))
    cdef int64_t* lab = <int64_t*>malloc(scap * sizeof(int64_t))
    cdef Rng r
    cdef int64_t rep, q, a, J, n, lo, hi, mid, i, j, alive
    cdef bint viol
    cdef double rate = 2.0 * d * kappa, mrate = rho * gamma, m, tt
    cdef int64_t tq
    cdef int64_t tx[64]
    with nogil:
        for rep in range(start, stop):
            seed_rng(&r, child_seed(master, rep))
            n = 0
            viol = False
            for q in range(p):
                if walk(&P[0], d, rate, t_end, window, &r):
                    viol = True
                J = P[0].n - 1
                for a in range(d):
                    ends[rep - start, q, a] = P[0].x[J * d + a]
                if mrate > 0:
                    m = 0.0
                    while True:
                        m += expo(&r, mrate)
                        if m > t_end:
                            break
                        if n == scap:
                            scap *= 2
                            st = <double*>realloc(st, scap * sizeof(double))
                            sq = <int64_t*>realloc(sq, scap * sizeof(int64_t))
                            sx = <int64_t*>realloc(sx, scap * d * sizeof(int64_t))
                            pos = <int64_t*>realloc(pos, scap * d * sizeof(int64_t))
                            lab = <int64_t*>realloc(lab, scap * sizeof(int64_t))
                        # last jump index with time <= m
                        lo = 0
                        hi = P[0].n
                        while hi - lo > 1:
                            mid = (lo + hi) >> 1
                            if P[0].t[mid] <= m:
                                lo = mid
                            else:
                                hi = mid
                        st[n] = m
                        sq[n] = q
                        for a in range(d):
                            sx[n * d + a] = P[0].x[lo * d + a]
                        n += 1
            # insertion sort by (time, walk index)
            for i in range(1, n):
                tt = st[i]
                tq = sq[i]
                for a in range(d):
                    tx[a] = sx[i * d + a]
                j = i - 1
                while j >= 0 and (st[j] > tt or (st[j] == tt and sq[j] > tq)):
                    st[j + 1] = st[j]
                    sq[j + 1] = sq[j]
                    for a in range(d):
                        sx[(j + 1) * d + a] = sx[j * d + a]
                    j -= 1
                st[j + 1] = tt
                sq[j + 1] = tq
                for a in range(d):
                    sx[(j + 1) * d + a] = tx[a]
            nseeds[rep - start] = n
            flags[rep - start] = 1 if viol else 0
            if n > 1:
                alive = coalesce(L, d, &offs[0, 0], K, &aprob[0], &aalias[0], sx, st, n,
                                 T + t_end, &r, pos, lab, NULL, True)
                ncoal[rep - start] = n - alive
    paths_free(P, 1)
    free(st); free(sq); free(sx); free(pos); free(lab)
    return ncoal_a, nseeds_a, ends_a, flags_a


# ------------------------------------------- single-walker range statistics

cdef int64_t RANGE_CAP = 256


def walk_ranges(const int64_t[:, ::1] offs, const double[::1] aprob, const int64_t[::1] aalias, int64_t horizon,
                uint64_t master, int64_t start, int64_t stop):
    cdef int64_t d = offs.shape[1], K = aprob.shape[0]
    out = np.zeros((stop - start, horizon), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef int64_t* vis = <int64_t*>malloc(RANGE_CAP * d * sizeof(int64_t))
    cdef int64_t pos[64]
    cdef Rng r
    cdef int64_t rep, j, a, nv, k, w
    cdef bint seen, overflow = False
    cdef double tj
    if d > 64:
        raise ValueError("dimension above 64 not supported")
    with nogil:
        for rep in range(start, stop):
            seed_rng(&r, child_seed(master, rep))
            for a in range(d):
                pos[a] = 0
            tj = expo(&r, 1.0)
            for j in range(horizon):
                for a in range(d):
                    vis[a] = pos[a]
                nv = 1
                while tj <= j + 1:
                    k = alias_draw(&r, K, &aprob[0], &aalias[0])
                    for a in range(d):
                        pos[a] += offs[k, a]
                    seen = False
                    for w in range(nv):
                        if same_site(&vis[w * d], pos, d):
                            seen = True
                            break
                    if not seen:
                        if nv == RANGE_CAP:
                            overflow = True
                        else:
                            for a in range(d):
                                vis[nv * d + a] = pos[a]
                            nv += 1
                    tj += expo(&r, 1.0)
                o[rep - start, j] = nv
    free(vis)
    if overflow:
        raise OverflowError("unit-interval range exceeded buffer")
    return out


def meeting_pairs(const int64_t[:, ::1] offs, const double[::1] aprob, const int64_t[::1] aalias, double gap,
                  int64_t horizon, double Kgood, uint64_t master, int64_t start, int64_t stop):
    cdef int64_t d = offs.shape[1], K = aprob.shape[0], R = stop - start
    met_a = np.zeros(R, dtype=np.uint8)
    good_a = np.zeros(R, dtype=np.uint8)
    cdef uint8_t[::1] met = met_a
    cdef uint8_t[::1] good = good_a
    cdef int64_t* vis = <int64_t*>malloc(RANGE_CAP * d * sizeof(int64_t))
    cdef int64_t U[64]
    cdef int64_t V[64]
    cdef Rng r
    cdef int64_t rep, a, k, jc, nv, w, who
    cdef int64_t jv = <int64_t>floor(gap)
    cdef bint m, ok, seen, overflow = False
    cdef double t, dt, tn, v = gap
    if d > 64:
        raise ValueError("dimension above 64 not supported")
    with nogil:
        for rep in range(start, stop):
            seed_rng(&r, child_seed(master, rep))
            for a in range(d):
                U[a] = 0
                V[a] = 0
            t = 0.0
            if v > 0:
                while True:
                    dt = expo(&r, 1.0)
                    if t + dt >= v:
                        break
                    t += dt
                    k = alias_draw(&r, K, &aprob[0], &aalias[0])
                    for a in range(d):
                        U[a] += offs[k, a]
            m = same_site(U, V, d)
            ok = True
            jc = jv
            for a in range(d):
                vis[a] = V[a]
            nv = 1
            t = v
            while True:
                tn = t + expo(&r, 2.0)
                while jc + 1 <= horizon and tn > jc + 1:
                    if <double>nv > Kgood * log(<double>(jc - jv + 5)):
                        ok = False
                    jc += 1
                    for a in range(d):
                        vis[a] = V[a]
                    nv = 1
                if tn > horizon:
                    break
                t = tn
                who = uindex(&r, 2)
                k = alias_draw(&r, K, &aprob[0], &aalias[0])
                if who == 0:
                    for a in range(d):
                        U[a] += offs[k, a]
                else:
                    for a in range(d):
                        V[a] += offs[k, a]
                    seen = False
                    for w in range(nv):
                        if same_site(&vis[w * d], V, d):
                            seen = True
                            break
                    if not seen:
                        if nv == RANGE_CAP:
                            overflow = True
                        else:
                            for a in range(d):
                                vis[nv * d + a] = V[a]
                            nv += 1
                if not m and same_site(U, V, d):
                    m = True
            met[rep - start] = 1 if m else 0
            good[rep - start] = 1 if ok else 0
    free(vis)
    if overflow:
        raise OverflowError("unit-interval range exceeded buffer")
    return met_a, good_a
