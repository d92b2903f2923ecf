"""Moments of the parabolic Anderson model with a voter catalyst.

Two independent estimators of E[exp(gamma sum_q int_0^t xi(X_q(s), t-s) ds)]:
the direct Feynman-Kac average over simulated voter fields, and the dual
average of rho^{-N_coal} over coalescing walkers seeded on Poisson marks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import core
from .errors import HeavyTail, WindowViolation
from .kernels import Kernel, dual
from .parallel import concat, run_sharded
from .rng import Stream
from .stats import MomentEstimate, from_log_weights
from .voter import VoterConfig


@dataclass(frozen=True)
class PathSample:
    times: np.ndarray      # jump times, times[0] = 0
    positions: np.ndarray  # position after each jump, positions[0] = origin
    kappa: float
    t: float

    @property
    def jump_count(self) -> int:
        return len(self.times) - 1

    @property
    def endpoint(self) -> np.ndarray:
        return self.positions[-1]

    def at(self, s: float) -> np.ndarray:
        return self.positions[int(np.searchsorted(self.times, s, side="right")) - 1]


def sample_walk(kappa: float, t: float, rng: Stream, d: int = 1) -> PathSample:
    """Simple random walk with step rate 2 d kappa on [0, t]."""
    if kappa < 0 or t < 0:
        raise ValueError("kappa and t must be non-negative")
    times = [0.0]
    pos = [np.zeros(d, dtype=np.int64)]
    rate = 2.0 * d * kappa
    if rate > 0:
        tc = 0.0
        while True:
            tc += rng.exponential(rate)
            if tc > t:
                break
            j = rng.integer(2 * d)
            nxt = pos[-1].copy()
            nxt[j >> 1] += 1 if (j & 1) == 0 else -1
            times.append(tc)
            pos.append(nxt)
    return PathSample(np.array(times), np.array(pos), kappa, t)


@dataclass(frozen=True)
class PoissonMarks:
    times: np.ndarray
    intensity: float


def sample_marks(intensity: float, t: float, rng: Stream) -> PoissonMarks:
    out = []
    if intensity > 0:
        m = 0.0
        while True:
            m += rng.exponential(intensity)
            if m > t:
                break
            out.append(m)
    return PoissonMarks(np.array(out), intensity)


@dataclass(frozen=True)
class MomentResult:
    """Moment estimate plus the implied finite-t Lyapunov exponent.

    ``estimate`` is the replica average of the estimator's own weight: the
    full moment for the direct route, exp[pt(Lambda - rho gamma)] for the
    dual route. ``lam`` is the implied Lambda_p(t) in both cases.
    """

    mode: str
    p: int
    t: float
    estimate: MomentEstimate
    lam: float
    lam_se: float
    flagged: int
    log_weights: np.ndarray = field(repr=False, compare=False)
    flags: np.ndarray = field(repr=False, compare=False)
    ends: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def ci(self):
        return self.lam - 1.96 * self.lam_se, self.lam + 1.96 * self.lam_se

    def as_dict(self):
        d = self.estimate.as_dict()
        d.update({"mode": self.mode, "p": self.p, "t": self.t, "lambda_hat": self.lam,
                  "lambda_se": self.lam_se, "window_flagged": self.flagged})
        return d


def _finish(mode, p, t, logw, flags, shift, ends=None):
    keep = flags == 0
    flagged = int((~keep).sum())
    if not keep.any():
        raise WindowViolation("every replica left the safe window")
    lw = logw[keep]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HeavyTail)
        est = from_log_weights(lw, excluded=flagged)
    for w in caught:
        warnings.warn(w.message, HeavyTail, stacklevel=3)
    lam = shift + est.log_mean / (p * t)
    lam_se = est.log_std_error / (p * t)
    return MomentResult(mode, p, t, est, lam, lam_se, flagged, logw, flags, ends)


def _window(cfg_L: int, window):
    if window is not None:
        return int(window)
    return cfg_L // 2 - 1 if cfg_L > 0 else -1


def direct_moment(p: int, kappa: float, gamma: float, t: float, cfg: VoterConfig,
                  replicas: int, seed: int, window: int | None = None,
                  workers: int | None = None) -> MomentResult:
    """Feynman-Kac average with one shared voter field per replica.

    The field is run forward over [0, t] after the warm-up; along each walk
    the integral of xi(X(s), t-s) is accumulated exactly over the breakpoints
    (walk jumps and flips of the occupied site). Replicas whose walks leave
    the window are excluded; the count is reported.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    tor = cfg.torus
    src, prob, alias = cfg.tables
    win = _window(tor.L, window)

    def job(a, b):
        return core.impl.pam_direct(tor.L, tor.d, src, prob, alias, cfg.rho,
                                    float(cfg.warm), int(p), float(kappa), float(gamma),
                                    float(t), win, seed, a, b)
    logw, ends, flags = concat(run_sharded(job, replicas, workers))
    return _finish("direct", p, t, logw, flags, 0.0, ends)


def dual_moment(p: int, kappa: float, gamma: float, rho: float, t: float, T: float,
                replicas: int, seed: int, kernel: Kernel | None = None, d: int = 2,
                L: int = 0, window: int | None = None,
                workers: int | None = None) -> MomentResult:
    """Average of rho^{-N_coal(T+t)} over walks, Poisson(rho gamma) marks and duals.

    ``kernel`` is the voter kernel p (simple random walk by default); the
    coalescing walkers use p*. ``L = 0`` runs on the infinite lattice.
    """
    from .kernels import make_simple_random_walk

    if p < 1:
        raise ValueError("p must be at least 1")
    kernel = kernel or make_simple_random_walk(d)
    ks = dual(kernel)
    offs = np.ascontiguousarray(ks.offsets)
    prob, alias = ks.alias_table
    win = _window(L, window)

    def job(a, b):
        return core.impl.pam_dual(int(L), offs, prob, alias, float(rho), float(T), int(p),
                                  float(kappa), float(gamma), float(t), win, seed, a, b)
    ncoal, nseeds, ends, flags = concat(run_sharded(job, replicas, workers))
    logw = -ncoal.astype(np.float64) * math.log(rho)
    res = _finish("dual", p, t, logw, flags, rho * gamma, ends)
    return res


@dataclass(frozen=True)
class PinnedResult:
    site: tuple
    estimate: MomentEstimate
    lam: float
    candidates: dict


def pinned_moment(p: int, kappa: float, gamma: float, t: float, cfg: VoterConfig,
                  replicas: int, seed: int, candidates=None, n_modes: int = 4,
                  window: int | None = None, workers: int | None = None,
                  base: MomentResult | None = None) -> PinnedResult:
    """max_x E[exp(gamma sum_q int xi) ; X_1(t) = ... = X_p(t) = x].

    Candidates are the origin plus the ``n_modes`` most frequent common
    endpoints unless given explicitly. Reuses ``base`` (a direct run with the
    same arguments) when supplied, so pinned and unpinned share replicas.
    """
    res = base or direct_moment(p, kappa, gamma, t, cfg, replicas, seed, window, workers)
    keep = res.flags == 0
    lw = res.log_weights[keep]
    ends = res.ends[keep]
    common = np.all(ends == ends[:, :1, :], axis=1)
    same = np.all(common, axis=1)
    end0 = ends[:, 0, :]
    if candidates is None:
        cands = [tuple([0] * cfg.torus.d)]
        if same.any():
            u, c = np.unique(end0[same], axis=0, return_counts=True)
            for row in u[np.argsort(-c, kind="stable")][:n_modes]:
                tup = tuple(int(v) for v in row)
                if tup not in cands:
                    cands.append(tup)
    else:
        cands = [tuple(int(v) for v in x) for x in candidates]
    table = {}
    best = None
    for x in cands:
        hit = same & np.all(end0 == np.asarray(x), axis=1)
        if not hit.any():
            est = MomentEstimate(0.0, 0.0, len(lw), -math.inf, 0.0, 0.0, 0.0)
        else:
            est = _masked_estimate(lw, hit)
        table[x] = est
        if best is None or est.mean > table[best].mean:
            best = x
    est = table[best]
    lam = est.log_mean / (p * t) if est.mean > 0 else -math.inf
    return PinnedResult(best, est, lam, table)


def _masked_estimate(lw: np.ndarray, hit: np.ndarray) -> MomentEstimate:
    # weights are zero off the event; log-space with exact zeros
    top = float(lw[hit].max())
    w = np.where(hit, np.exp(lw - top), 0.0)
    n = len(lw)
    mean_s = float(w.mean())
    se_s = float(w.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    scale = math.exp(top) if top < 700 else math.inf
    mean = mean_s * scale
    se = se_s * scale
    share = float(w.max() / w.sum())
    return MomentEstimate(mean, se, n, math.log(mean_s) + top, mean - 1.96 * se,
                          mean + 1.96 * se, share)


def mark_counts(intensity: float, t: float, replicas: int, seed: int) -> np.ndarray:
    """Number of Poisson marks on [0, t] for each replica (diagnostic)."""
    out = np.empty(replicas, dtype=np.int64)
    for i in range(replicas):
        out[i] = len(sample_marks(intensity, t, Stream.for_replica(seed, i)).times)
    return out

