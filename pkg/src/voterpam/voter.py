"""Forward simulation of the voter model on a torus."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import core
from .errors import InvalidDimension, ZeroHits
from .kernels import Kernel, Torus
from .parallel import concat, run_sharded
from .rng import Stream
from .stats import Proportion, proportion


@dataclass(frozen=True)
class Bernoulli:
    """Product Bernoulli(rho) initial law."""


@dataclass(frozen=True)
class Warmed:
    """Bernoulli(rho) evolved for time T before the clock is reset to 0."""

    T: float

    def __post_init__(self):
        if not self.T >= 0:
            raise ValueError("warm-up time must be non-negative")


def default_warm(torus: Torus) -> float:
    """Diffusive relaxation heuristic 4 L^2 / (2d)."""
    return 4.0 * torus.L ** 2 / (2 * torus.d)


@dataclass(frozen=True)
class VoterConfig:
    torus: Torus
    kernel: Kernel
    rho: float
    init: Bernoulli | Warmed = Bernoulli()

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.kernel.d != self.torus.d:
            raise InvalidDimension("kernel and torus dimensions differ")

    @property
    def warm(self) -> float:
        return self.init.T if isinstance(self.init, Warmed) else 0.0

    def warmed(self, T: float | None = None) -> VoterConfig:
        T = default_warm(self.torus) if T is None else T
        return VoterConfig(self.torus, self.kernel, self.rho, Warmed(T))

    @cached_property
    def tables(self):
        prob, alias = self.kernel.alias_table
        return self.torus.source_table(self.kernel), prob, alias


@dataclass(frozen=True)
class OccupationRecord:
    site: int
    t: float
    value: float


class VoterField:
    """One realisation of xi on the torus, queryable at (site, time).

    Snapshots are kept at every ``snapshot_every`` time units (and at time 0);
    a query between snapshots replays the flip log of that site.
    """

    def __init__(self, cfg: VoterConfig, state: np.ndarray, rng: Stream,
                 record: bool = True, snapshot_every: float | None = None):
        self.cfg = cfg
        self.state = np.ascontiguousarray(state, dtype=np.uint8).copy()
        self.rng = rng
        self.record = record
        self.snapshot_every = snapshot_every
        self.current_time = 0.0
        self.event_count = 0
        self.snapshot_times = [0.0]
        self.snapshots = [self.state.copy()]
        self._log_t: list[np.ndarray] = []
        self._log_x: list[np.ndarray] = []
        self._log_v: list[np.ndarray] = []
        self._index = None

    @property
    def n_sites(self) -> int:
        return self.state.size

    def copy(self) -> VoterField:
        other = VoterField(self.cfg, self.state, self.rng.copy(), self.record,
                           self.snapshot_every)
        other.current_time = self.current_time
        other.event_count = self.event_count
        other.snapshot_times = list(self.snapshot_times)
        other.snapshots = [s.copy() for s in self.snapshots]
        other._log_t = list(self._log_t)
        other._log_x = list(self._log_x)
        other._log_v = list(self._log_v)
        return other

    def _site(self, x) -> int:
        if np.ndim(x) == 0:
            return int(x)
        return int(self.cfg.torus.index(x))

    def _flip_index(self):
        if self._index is None:
            t = np.concatenate(self._log_t) if self._log_t else np.zeros(0)
            x = np.concatenate(self._log_x) if self._log_x else np.zeros(0, np.int64)
            v = np.concatenate(self._log_v) if self._log_v else np.zeros(0, np.uint8)
            order = np.argsort(x, kind="stable")
            bounds = np.searchsorted(x[order], np.arange(self.n_sites + 1))
            self._index = (t[order], v[order], bounds)
        return self._index

    def flips(self, x):
        """Flip times and new values of site ``x`` (requires recording)."""
        if not self.record:
            raise RuntimeError("field was evolved without a flip log")
        t, v, b = self._flip_index()
        i = self._site(x)
        return t[b[i]:b[i + 1]], v[b[i]:b[i + 1]]

    def value(self, x, s: float) -> int:
        """xi(x, s) for 0 <= s <= current_time."""
        if not 0.0 <= s <= self.current_time:
            raise ValueError("query time outside the simulated window")
        i = self._site(x)
        k = int(np.searchsorted(self.snapshot_times, s, side="right")) - 1
        base = int(self.snapshots[k][i])
        if s == self.snapshot_times[k]:
            return base
        times, vals = self.flips(i)
        j = int(np.searchsorted(times, s, side="right")) - 1
        if j >= 0 and times[j] > self.snapshot_times[k]:
            return int(vals[j])
        return base

    def occupation_from_log(self, x, t0: float, t1: float) -> float:
        """int_{t0}^{t1} xi(x, s) ds, summed over the holding intervals."""
        i = self._site(x)
        times, vals = self.flips(i)
        val = self.value(i, t0)
        last = t0
        occ = 0.0
        for tf, vf in zip(times.tolist(), vals.tolist()):
            if tf <= t0:
                continue
            if tf > t1:
                break
            if val:
                occ += tf - last
            last = tf
            val = vf
        if val:
            occ += t1 - last
        return occ


def init_field(cfg: VoterConfig, rng: Stream, record: bool = True,
               snapshot_every: float | None = None) -> VoterField:
    """Bernoulli bits (one uniform per site), then the warm-up if requested."""
    N = cfg.torus.n_sites
    xi = np.fromiter((1 if rng.random() < cfg.rho else 0 for _ in range(N)),
                     dtype=np.uint8, count=N)
    if cfg.warm > 0:
        src, prob, alias = cfg.tables
        st = rng.state_array()
        core.impl.voter_evolve(xi, src, prob, alias, float(cfg.warm), st, False)
        rng.load_state(st)
    return VoterField(cfg, xi, rng, record, snapshot_every)


def field_from_state(cfg: VoterConfig, state, rng: Stream, record: bool = True):
    """Field started from an explicit configuration (e.g. consensus)."""
    return VoterField(cfg, np.asarray(state, dtype=np.uint8), rng, record)


def evolve(fld: VoterField, dt: float, rng: Stream | None = None) -> VoterField:
    """Run the Gillespie dynamics for ``dt``; each site rings at rate 1."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    rng = fld.rng if rng is None else rng
    src, prob, alias = fld.cfg.tables
    step = fld.snapshot_every or dt
    remaining = dt
    while remaining > 0:
        h = min(step, remaining)
        st = rng.state_array()
        n, times, sites, vals = core.impl.voter_evolve(fld.state, src, prob, alias,
                                                       float(h), st, fld.record)
        rng.load_state(st)
        if fld.record:
            fld._log_t.append(times + fld.current_time)
            fld._log_x.append(sites)
            fld._log_v.append(vals)
            fld._index = None
        fld.current_time += h
        fld.event_count += int(n)
        remaining -= h
        if fld.snapshot_every:
            fld.snapshot_times.append(fld.current_time)
            fld.snapshots.append(fld.state.copy())
    return fld


def occupation_time(fld: VoterField, site, t: float, rng: Stream | None = None):
    """T_t of ``site`` from the current time over the next ``t`` time units.

    Holding intervals are summed exactly; with recording on, the value is
    read back from the flip log after evolving.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    rng = fld.rng if rng is None else rng
    i = fld._site(site)
    if fld.record:
        t0 = fld.current_time
        evolve(fld, t, rng)
        return OccupationRecord(i, t, fld.occupation_from_log(i, t0, t0 + t))
    src, prob, alias = fld.cfg.tables
    st = rng.state_array()
    occ = core.impl.voter_occupation_single(fld.state, src, prob, alias, i, float(t), st)
    rng.load_state(st)
    fld.current_time += t
    return OccupationRecord(i, t, float(occ))


def occupation_samples(cfg: VoterConfig, t: float, replicas: int, seed: int,
                       site=0, workers: int | None = None) -> np.ndarray:
    """T_t of ``site`` for replicas 0..replicas-1 (child seeds of ``seed``)."""
    src, prob, alias = cfg.tables
    i = int(site) if np.ndim(site) == 0 else int(cfg.torus.index(site))
    N = cfg.torus.n_sites

    def job(a, b):
        return core.impl.voter_occupation(N, src, prob, alias, cfg.rho, float(cfg.warm),
                                          i, float(t), seed, a, b)
    return concat(run_sharded(job, replicas, workers))


def rate_scale(d: int, t: float) -> float:
    """Large-deviation speed b_t of the occupation time."""
    if d == 1:
        raise InvalidDimension("no large-deviation speed in d = 1")
    if d == 2:
        return math.log(t)
    if d == 3:
        return math.sqrt(t)
    if d == 4:
        return t / math.log(t)
    return t


@dataclass(frozen=True)
class TailEstimate:
    alpha: float
    t: float
    prob: Proportion
    b_t: float
    decay: float

    @property
    def p_hat(self):
        return self.prob.p_hat


def occupation_tail(cfg: VoterConfig, alpha: float, t: float, replicas: int, seed: int,
                    workers: int | None = None, samples: np.ndarray | None = None):
    """P(T_t / t >= alpha) with a Wilson interval and the decay -log P / b_t."""
    if not cfg.rho < alpha < 1:
        raise ValueError("alpha must lie in (rho, 1)")
    if samples is None:
        samples = occupation_samples(cfg, t, replicas, seed, workers=workers)
    hits = int(np.count_nonzero(samples / t >= alpha))
    pr = proportion(hits, len(samples))
    if hits == 0:
        raise ZeroHits(f"no replica reached T_t/t >= {alpha}", len(samples), pr.ci_high)
    bt = rate_scale(cfg.torus.d, t)
    return TailEstimate(alpha, t, pr, bt, -math.log(pr.p_hat) / bt)


def box_sites(shape) -> np.ndarray:
    """Coordinates of the box [0, n_1) x ... x [0, n_d)."""
    return np.indices(tuple(shape)).reshape(len(shape), -1).T


@dataclass(frozen=True)
class Persistence:
    prob: Proportion
    t: float
    rate: float

    @property
    def p_hat(self):
        return self.prob.p_hat

    def as_dict(self):
        return {"p_hat": self.prob.p_hat, "ci_low": self.prob.ci_low,
                "ci_high": self.prob.ci_high, "rate": self.rate}


def persistence_probability(cfg: VoterConfig, Q, t: float, replicas: int, seed: int,
                            workers: int | None = None) -> Persistence:
    """P(xi = 1 on Q x [0, t]) and the empirical rate -(1/t) log P."""
    if t <= 0:
        raise ValueError("t must be positive")
    Q = np.atleast_2d(np.asarray(Q, dtype=np.int64))
    if Q.shape[1] != cfg.torus.d:
        raise InvalidDimension("Q coordinates have the wrong dimension")
    if np.any(Q < 0) or np.any(Q >= cfg.torus.L):
        raise ValueError("Q must lie inside the torus")
    mask = np.zeros(cfg.torus.n_sites, dtype=np.uint8)
    mask[cfg.torus.index(Q)] = 1
    src, prob, alias = cfg.tables
    N = cfg.torus.n_sites

    def job(a, b):
        return core.impl.voter_persistence(N, src, prob, alias, cfg.rho, float(cfg.warm),
                                           mask, float(t), seed, a, b)
    ok = concat(run_sharded(job, replicas, workers))
    hits = int(ok.sum())
    pr = proportion(hits, replicas)
    if hits == 0:
        raise ZeroHits("no replica stayed occupied", replicas, pr.ci_high)
    return Persistence(pr, t, -math.log(pr.p_hat) / t)


def forward_indicators(cfg: VoterConfig, queries, replicas: int, seed: int,
                       workers: int | None = None) -> np.ndarray:
    """uint8[replicas, Q]: xi(x_q, t_q) for queries (x_q, t_q), one run per replica."""
    xs = [np.asarray(x) for x, _ in queries]
    ts = np.array([float(s) for _, s in queries])
    if np.any(ts < 0):
        raise ValueError("query times must be non-negative")
    ck = np.unique(ts)
    q_ck = np.searchsorted(ck, ts).astype(np.int64)
    sites = np.array([int(cfg.torus.index(x)) for x in xs], dtype=np.int64)
    src, prob, alias = cfg.tables
    N = cfg.torus.n_sites

    def job(a, b):
        return core.impl.voter_queries(N, src, prob, alias, cfg.rho, float(cfg.warm), ck,
                                       sites, q_ck, seed, a, b)
    return concat(run_sharded(job, replicas, workers))


def forward_probability(cfg: VoterConfig, points, t: float, replicas: int, seed: int,
                        workers: int | None = None) -> Proportion:
    """P(xi(x_m, t - s_m) = 1 for all m) by direct simulation."""
    hits = forward_indicators(cfg, [(x, t - s) for x, s in points], replicas, seed, workers)
    return proportion(int(np.all(hits == 1, axis=1).sum()), replicas)


@dataclass(frozen=True)
class PairCorrelation:
    delta: tuple
    s: float
    value: float
    std_error: float
    runs: int
    samples: int

    @property
    def ci(self):
        return self.value - 1.96 * self.std_error, self.value + 1.96 * self.std_error


def _runs_for(cfg: VoterConfig, replicas: int) -> int:
    # every run contributes one pair sample per torus site
    return max(2, -(-int(replicas) // cfg.torus.n_sites))


def pair_correlation_batch(cfg: VoterConfig, pairs, replicas: int, seed: int,
                           workers: int | None = None, runs: int | None = None):
    """E[(xi(x+delta, s) - rho)(xi(x, 0) - rho)] for each (delta, s) in ``pairs``.

    Each independent run averages the product over all torus sites x, which
    is legitimate by translation invariance; ``replicas`` counts site samples
    and the standard error comes from the spread between runs.
    """
    if not isinstance(cfg.init, Warmed):
        raise ValueError("pair correlations need a warmed initial law")
    runs = runs or _runs_for(cfg, replicas)
    lags = np.unique([float(s) for _, s in pairs])
    pair_lag = np.searchsorted(lags, [float(s) for _, s in pairs]).astype(np.int64)
    shift = np.stack([cfg.torus.shift_table(np.asarray(dl)) for dl, _ in pairs])
    src, prob, alias = cfg.tables
    N = cfg.torus.n_sites

    def job(a, b):
        return core.impl.voter_pair_products(N, src, prob, alias, cfg.rho,
                                             float(cfg.warm), lags, shift, pair_lag,
                                             seed, a, b)
    vals = concat(run_sharded(job, runs, workers, chunk=max(1, runs // 8 or 1)))
    out = []
    for j, (dl, s) in enumerate(pairs):
        col = vals[:, j]
        out.append(PairCorrelation(tuple(int(v) for v in np.ravel(dl)), float(s),
                                   float(col.mean()),
                                   float(col.std(ddof=1) / math.sqrt(runs)), runs, runs * N))
    return out


def pair_correlation_empirical(cfg: VoterConfig, x1, x2, s: float, replicas: int,
                               seed: int, workers: int | None = None) -> PairCorrelation:
    delta = np.asarray(x1) - np.asarray(x2)
    return pair_correlation_batch(cfg, [(delta, s)], replicas, seed, workers)[0]


@dataclass(frozen=True)
class Stabilization:
    T: float
    first: list = field(default_factory=list)
    second: list = field(default_factory=list)

    def z_scores(self):
        return [(b.value - a.value) / math.hypot(a.std_error, b.std_error)
                for a, b in zip(self.first, self.second)]

    def drift(self):
        return [b.value - a.value for a, b in zip(self.first, self.second)]

    @property
    def stable(self) -> bool:
        return all(abs(z) <= 3.0 for z in self.z_scores())


def stabilization_check(cfg: VoterConfig, pairs, replicas: int, seed: int,
                        workers: int | None = None) -> Stabilization:
    """Compare the two-point function after warm-ups T and 2T."""
    T = cfg.warm if cfg.warm > 0 else default_warm(cfg.torus)
    a = pair_correlation_batch(cfg.warmed(T), pairs, replicas, seed, workers)
    b = pair_correlation_batch(cfg.warmed(2 * T), pairs, replicas, seed + 1, workers)
    return Stabilization(T, a, b)
