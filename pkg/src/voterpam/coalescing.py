"""Coalescing random walks: the dual of the voter model, and the bounds built on it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .errors import InvalidDimension, NonConvergent, RecurrentKernel, ZeroHits
from .kernels import Kernel, dual, green_constants, green_function
from .parallel import concat, run_sharded
from .rng import Stream
from .stats import MomentEstimate, Proportion, from_log_weights, from_values, proportion


@dataclass(frozen=True, order=True)
class WalkerSeed:
    birth_time: float
    site: tuple = field(compare=False)

    def __post_init__(self):
        if not math.isfinite(self.birth_time):
            raise ValueError("birth time must be finite")
        object.__setattr__(self, "site", tuple(int(v) for v in self.site))


@dataclass(frozen=True)
class CoalescingSystem:
    """Walkers born at (site, time), moving with ``kernel`` (already p*) at rate 1.

    ``L = 0`` means the infinite lattice; otherwise positions wrap on a torus.
    """

    seeds: tuple
    horizon: float
    kernel: Kernel
    L: int = 0
    later_survives: bool = True

    def __post_init__(self):
        seeds = tuple(self.seeds)
        if any(b.birth_time > a.birth_time for a, b in zip(seeds[1:], seeds[:-1])):
            raise ValueError("seeds must be sorted by birth time")
        if seeds and self.horizon < seeds[-1].birth_time:
            raise ValueError("horizon precedes the last birth")
        if any(len(s.site) != self.kernel.d for s in seeds):
            raise InvalidDimension("seed sites have the wrong dimension")
        object.__setattr__(self, "seeds", seeds)

    def arrays(self):
        d = self.kernel.d
        sites = np.array([s.site for s in self.seeds], dtype=np.int64).reshape(-1, d)
        births = np.array([s.birth_time for s in self.seeds], dtype=np.float64)
        return np.ascontiguousarray(sites), births


@dataclass(frozen=True)
class CoalescenceRun:
    times: np.ndarray   # event times
    alive: np.ndarray   # N_t right after each event
    born: np.ndarray    # births up to each event
    coalesced_count: int

    def n_at(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.alive[i]) if i >= 0 else 0

    @property
    def n_coal(self) -> np.ndarray:
        return self.born - self.alive


def run(system: CoalescingSystem, rng: Stream) -> CoalescenceRun:
    """Event-driven simulation up to the horizon; merges happen at jump times."""
    sites, births = system.arrays()
    prob, alias = system.kernel.alias_table
    st = rng.state_array()
    t, a, b = core.impl.coalesce_trajectory(int(system.L),
                                            np.ascontiguousarray(system.kernel.offsets),
                                            prob, alias, sites, births,
                                            float(system.horizon), st,
                                            bool(system.later_survives))
    rng.load_state(st)
    coal = int(b[-1] - a[-1]) if len(a) else 0
    return CoalescenceRun(t, a, b, coal)


def alive_counts(kernel_star: Kernel, sites, births, horizon: float, replicas: int,
                 seed: int, L: int = 0, workers: int | None = None) -> np.ndarray:
    """N_horizon for each replica."""
    sites = np.ascontiguousarray(np.asarray(sites, dtype=np.int64).reshape(-1, kernel_star.d))
    births = np.ascontiguousarray(births, dtype=np.float64)
    order = np.argsort(births, kind="stable")
    sites, births = np.ascontiguousarray(sites[order]), np.ascontiguousarray(births[order])
    offs = np.ascontiguousarray(kernel_star.offsets)
    prob, alias = kernel_star.alias_table

    def job(a, b):
        return core.impl.coalesce_fixed(int(L), offs, prob, alias, sites, births,
                                        float(horizon), seed, a, b)
    return concat(run_sharded(job, replicas, workers))


@dataclass(frozen=True)
class DualCorrelation:
    estimate: MomentEstimate
    bracket_low: float
    bracket_high: float
    mean_alive: float

    def as_dict(self):
        e = self.estimate
        return {"estimate": e.mean, "std_error": e.std_error, "ci": [e.ci_low, e.ci_high],
                "bracket_low": self.bracket_low, "bracket_high": self.bracket_high}


def correlation_dual(kernel: Kernel, points, rho: float, T: float, t: float,
                     replicas: int, seed: int, L: int = 0,
                     workers: int | None = None) -> DualCorrelation:
    """P(xi(x_m, t - s_m) = 1 for all m) under Bernoulli(rho) evolved for T.

    ``kernel`` is the voter kernel p; walkers move with p*. The walker of
    point m is born at (x_m, s_m) and followed to T + t. The bracket is
    [est, min(rho, est * rho^-(mean N - 1))]: the T = infinity value can
    only be larger, and is at most rho.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    pts = sorted(((float(s), tuple(int(v) for v in x)) for x, s in points))
    if any(s < 0 or s > t for s, _ in pts):
        raise ValueError("need 0 <= s_m <= t")
    if len(pts) == 1:
        est = MomentEstimate(rho, 0.0, replicas, math.log(rho), rho, rho)
        return DualCorrelation(est, rho, rho, 1.0)
    ks = dual(kernel)
    n = alive_counts(ks, [x for _, x in pts], [s for s, _ in pts], T + t, replicas, seed,
                     L, workers)
    est = from_values(rho ** n.astype(np.float64))
    nbar = float(n.mean())
    hi = min(rho, est.mean * rho ** -(nbar - 1.0))
    return DualCorrelation(est, est.mean, max(hi, est.mean), nbar)


def pair_correlation_closed_form(k: Kernel, x1, x2, s: float, rho: float,
                                 with_error: bool = False):
    """rho(1-rho)/G * int_0^inf p_{s+t}(x1, x2) dt for symmetric transient k."""
    if k.d <= 2:
        raise RecurrentKernel(f"d={k.d}: no non-trivial equilibrium")
    if not k.symmetric:
        raise ValueError("closed form needs a symmetric kernel")
    delta = np.asarray(x1, dtype=np.int64) - np.asarray(x2, dtype=np.int64)
    G = green_constants(k, star=False)
    if not np.any(delta) and s == 0:
        val, err = rho * (1 - rho), 0.0
    else:
        gv, ge = green_function(k, delta, s)
        val = rho * (1 - rho) * gv / G.g
        err = rho * (1 - rho) * (ge / G.g + gv * G.quadrature_error / G.g ** 2)
    return (val, err) if with_error else val


def hitting_weight(k: Kernel, z) -> float:
    """w(z) = P_z(walk ever hits 0) = (1/G) int p_t(z, 0) dt."""
    if not np.any(z):
        return 1.0
    G = green_constants(k, star=False)
    return green_function(k, z)[0] / G.g


# ------------------------------------------------------------- delta(K)

def _delta_term(m: int) -> float:
    if m <= 0:
        return math.exp(-1.0)
    return math.exp(-m * (math.log(m) - 1.0) - 1.0)


def delta_of_K(K: float, tol: float = 1e-15, max_m: int = 1_000_000) -> float:
    """sum_{j>=5} exp[-m_j (log m_j - 1) - 1] with m_j = floor(K log j).

    Terms sharing the same m_j are grouped, so the cost grows with the number
    of distinct m values rather than with j. Past the current group every
    term obeys exp[-m(log m - 1) - 1] <= e^{a-1} j^{-aK} with a = log m - 1,
    which bounds the tail; summation stops once that bound is below ``tol``.
    Raises NonConvergent (read: +inf) on overflow.
    """
    if not K > 0:
        raise ValueError("K must be positive")

    def mfl(j):
        return math.floor(K * math.log(j))

    def first_j(m):
        # smallest j >= 5 with mfl(j) >= m, exact while j is moderate
        if mfl(5) >= m:
            return 5
        if m / K > 34.0:
            return None
        j = max(5, math.ceil(math.exp(m / K)))
        while j > 5 and mfl(j - 1) >= m:
            j -= 1
        while mfl(j) < m:
            j += 1
        return j

    m = mfl(5)
    j = 5
    log_total = -math.inf
    for _ in range(max_m):
        jn = first_j(m + 1) if j is not None else None
        if jn is not None:
            lcount = math.log(jn - j) if jn > j else -math.inf
        else:
            # number of j with e^{m/K} <= j < e^{(m+1)/K}
            lcount = m / K + math.log(math.expm1(1.0 / K))
        lterm = -1.0 if m <= 0 else -m * (math.log(m) - 1.0) - 1.0
        lc = lcount + lterm
        if lc > 700:
            raise NonConvergent(f"delta({K}) overflows; treat as +inf")
        log_total = float(np.logaddexp(log_total, lc))
        if m >= 3:
            a = math.log(m) - 1.0
            q = a * K
            lj = math.log(jn) if jn is not None else (m + 1) / K
            if q > 1.0:
                # sum_{j >= jn} j^-q <= jn^(1-q)/(q-1) + jn^-q
                ltail = (a - 1.0) + float(np.logaddexp((1 - q) * lj - math.log(q - 1),
                                                       -q * lj))
                if ltail < math.log(tol):
                    return math.exp(log_total)
        j = jn
        m += 1
    raise NonConvergent(f"delta({K}) did not converge; treat as +inf")


def delta_direct(K: float, j_max: int = 200_000) -> float:
    """Plain term-by-term sum over j = 5..j_max (used as a cross-check)."""
    return math.fsum(_delta_term(math.floor(K * math.log(j))) for j in range(5, j_max + 1))


# ------------------------------------------------------- K-good walkers

@dataclass(frozen=True)
class Deficiency:
    K: float
    horizon: int
    prob: Proportion
    delta: float
    mean_range: float

    @property
    def passes(self) -> bool:
        return self.prob.p_hat <= self.delta + 3 * self.prob.std_error


def unit_ranges(kernel: Kernel, horizon: int, replicas: int, seed: int,
                workers: int | None = None) -> np.ndarray:
    """|R_j| for j = 0..horizon-1 of a rate-1 walk with the dual kernel of ``kernel``."""
    ks = dual(kernel)
    offs = np.ascontiguousarray(ks.offsets)
    prob, alias = ks.alias_table

    def job(a, b):
        return core.impl.walk_ranges(offs, prob, alias, int(horizon), seed, a, b)
    return concat(run_sharded(job, replicas, workers))


def k_good_deficiency(kernel: Kernel, K: float, horizon: int, replicas: int, seed: int,
                      workers: int | None = None) -> Deficiency:
    """P(some |R_j| > K log(j + 5), j < horizon) against delta(K)."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    R = unit_ranges(kernel, horizon, replicas, seed, workers)
    bound = K * np.log(np.arange(horizon) + 5.0)
    bad = np.any(R > bound[None, :], axis=1)
    return Deficiency(K, horizon, proportion(int(bad.sum()), replicas), delta_of_K(K),
                      float(R.mean()))


# ------------------------------------------------------------ meetings

@dataclass(frozen=True)
class Meeting:
    gap: float
    horizon: float
    joint: Proportion        # P(meet and later walker K-good)
    conditional: Proportion  # P(meet | later walker K-good)
    good: Proportion         # P(later walker K-good)


def meeting_probability(kernel: Kernel, gap: float, horizon: float, replicas: int,
                        seed: int, K: float = 8.0, workers: int | None = None) -> Meeting:
    """Two dual walkers born at the same point, ``gap`` apart in time.

    They are followed until ``horizon`` (a finite stand-in for "ever").
    """
    if gap < 0 or horizon <= gap:
        raise ValueError("need 0 <= gap < horizon")
    ks = dual(kernel)
    offs = np.ascontiguousarray(ks.offsets)
    prob, alias = ks.alias_table
    H = int(math.ceil(horizon))

    def job(a, b):
        return core.impl.meeting_pairs(offs, prob, alias, float(gap), H, float(K), seed,
                                       a, b)
    met, good = concat(run_sharded(job, replicas, workers))
    g = good.astype(bool)
    both = int(np.count_nonzero(met.astype(bool) & g))
    return Meeting(gap, H, proportion(both, replicas), proportion(both, int(g.sum())),
                   proportion(int(g.sum()), replicas))


@dataclass(frozen=True)
class DecayFit:
    gaps: np.ndarray
    meetings: list
    exponent: float
    exponent_se: float

    @property
    def monotone(self) -> bool:
        p = [m.conditional.p_hat for m in self.meetings]
        return all(b < a for a, b in zip(p, p[1:]))


def meeting_decay(kernel: Kernel, gaps, replicas: int, seed: int, K: float = 8.0,
                  horizon_factor: float = 8.0, workers: int | None = None) -> DecayFit:
    """Fit P(meet | good) ~ C gap^-a over the gaps by weighted least squares.

    The same child seeds are reused at every gap (common random numbers).
    """
    if kernel.d < 5:
        raise InvalidDimension("the meeting bound is stated for d >= 5")
    gaps = np.asarray(gaps, dtype=np.float64)
    ms = [meeting_probability(kernel, g, g * (1 + horizon_factor), replicas, seed, K,
                              workers) for g in gaps]
    p = np.array([m.conditional.p_hat for m in ms])
    if np.any(p <= 0):
        zero = [m for m in ms if m.conditional.hits == 0][0]
        raise ZeroHits(f"no meetings at gap {zero.gap}", zero.conditional.n,
                       zero.conditional.ci_high)
    n = np.array([m.conditional.n for m in ms], dtype=np.float64)
    var = (1 - p) / (n * p)   # variance of log p_hat
    w = 1.0 / var
    X = np.stack([np.ones_like(gaps), np.log(gaps)], axis=1)
    A = X.T @ (X * w[:, None])
    beta = np.linalg.solve(A, X.T @ (w * np.log(p)))
    cov = np.linalg.inv(A)
    return DecayFit(gaps, ms, float(-beta[1]), float(math.sqrt(cov[1, 1])))


def calibrate_C_eps(fit: DecayFit, K: float, eps: float) -> float:
    """Smallest C with P(meet | good) <= C K / gap^(1+eps) at every fitted gap (upper CI)."""
    return max(m.conditional.ci_high * m.gap ** (1 + eps) / K for m in fit.meetings)


# ------------------------------------------------------------ block bound

@dataclass(frozen=True)
class LatticePath:
    """Piecewise-constant path psi: psi(s) = sites[i] for times[i] <= s < times[i+1]."""

    times: tuple
    sites: tuple

    def __call__(self, s: float) -> tuple:
        i = int(np.searchsorted(self.times, s, side="right")) - 1
        return tuple(self.sites[max(i, 0)])

    @classmethod
    def constant(cls, d: int) -> LatticePath:
        return cls((0.0,), ((0,) * d,))


@dataclass(frozen=True)
class BlockConfig:
    path: LatticePath
    sets: tuple
    rho: float
    K: float
    r: float
    r_prime: float
    epsilon: float
    C_eps: float = 1.0

    def __post_init__(self):
        if abs(1.0 / self.r + 1.0 / self.r_prime - 1.0) > 1e-12:
            raise ValueError("need 1/r + 1/r' = 1")
        sets = tuple(tuple(sorted(float(x) for x in S)) for S in self.sets)
        for a, b in zip(sets, sets[1:]):
            if a and b and max(a) >= min(b):
                raise ValueError("sets must be ordered and disjoint")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        object.__setattr__(self, "sets", sets)


def set_distance(a, b) -> float:
    return min(abs(x - y) for x in a for y in b)


@dataclass(frozen=True)
class BlockReport:
    lhs: MomentEstimate
    blocks: list
    rhs: float
    rhs_se: float
    exponent: float

    @property
    def passes(self) -> bool:
        return self.lhs.mean <= self.rhs + 3 * math.hypot(self.lhs.std_error, self.rhs_se)


def _ncoal(kernel: Kernel, path: LatticePath, times, horizon, replicas, seed, workers):
    sites = [path(s) for s in times]
    n_alive = alive_counts(dual(kernel), sites, list(times), horizon, replicas, seed, 0,
                           workers)
    return len(times) - n_alive


def block_inequality_check(kernel: Kernel, cfg: BlockConfig, horizon: float,
                           replicas: int, seed: int,
                           workers: int | None = None) -> BlockReport:
    """Both sides of the block decoupling bound on the infinite lattice.

    ``horizon`` is how long after the last birth the walkers are followed.
    """
    if kernel.d < 5:
        raise InvalidDimension("the block bound is stated for d >= 5")
    rho, r = cfg.rho, cfg.r
    allt = [s for S in cfg.sets for s in S]
    H = max(allt) + horizon
    nc = _ncoal(kernel, cfg.path, allt, H, replicas, seed, workers)
    lhs = from_log_weights(-nc * math.log(rho), warn=False)
    blocks = []
    log_prod = 0.0
    rel_var = 0.0
    for j, S in enumerate(cfg.sets):
        nj = _ncoal(kernel, cfg.path, S, H, replicas, seed + 7919 * (j + 1), workers)
        ej = from_log_weights(-r * nj * math.log(rho), warn=False)
        blocks.append(ej)
        log_prod += ej.log_mean / r
        rel_var += (ej.std_error / ej.mean / r) ** 2
    delta = delta_of_K(cfg.K)
    pair = 0.0
    for a in range(len(cfg.sets)):
        for b in range(a + 1, len(cfg.sets)):
            pair += (len(cfg.sets[a]) * len(cfg.sets[b])
                     / set_distance(cfg.sets[a], cfg.sets[b]) ** (1 + cfg.epsilon))
    expo = (delta / rho * len(allt)
            + cfg.C_eps * cfg.K * (rho ** -cfg.r_prime - 1) / cfg.r_prime * pair)
    rhs = math.exp(expo + log_prod)
    return BlockReport(lhs, blocks, rhs, rhs * math.sqrt(rel_var), expo)
