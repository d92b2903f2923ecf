"""Lyapunov exponents from finite-t moments, and the bounds they must obey.

Every check below is a pure function of stored estimates and returns a
``PredicateReport``. The sandwich and monotonicity-in-p checks are exact at
finite t and are marked hard; the rest encode asymptotic statements and only
warn when they fail.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .anderson import MomentResult, PinnedResult, direct_moment, dual_moment
from .errors import AsymptoticCheck, DomainError, PredicateFailure
from .kernels import Torus, make_simple_random_walk
from .voter import VoterConfig, Warmed

SLACK = 3.0


# ---------------------------------------------------------------- envelopes

def rate_function_I(M: float) -> float:
    """M log M - M + 1, the Poisson rate function."""
    M = float(M)
    if not M >= 1.0:
        raise DomainError(f"rate function needs M >= 1, got {M}")
    x = M - 1.0
    # (1+x) log(1+x) - x without cancellation near M = 1
    return M * math.log1p(x) - x


def envelope_M(kappa: float, gamma: float, rho: float, d: int, tol: float = 1e-12) -> float:
    """Solve I(M) = (1 - rho) gamma / (2 d kappa) on (1, inf) by bisection."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    target = (1.0 - rho) * gamma / (2.0 * d * kappa)
    if target <= 0:
        return 1.0
    lo, hi = 1.0, 2.0
    while rate_function_I(hi) < target:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if rate_function_I(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LipschitzEnvelope:
    kappas: np.ndarray
    M: np.ndarray
    upper: np.ndarray   # (M - 1) 2d, bound on the right derivative
    lower: float        # -2d, bound on the left derivative
    d: int


def lipschitz_envelope(kappas, gamma: float, rho: float, d: int) -> LipschitzEnvelope:
    ks = np.asarray(kappas, dtype=np.float64)
    M = np.array([envelope_M(k, gamma, rho, d) for k in ks])
    return LipschitzEnvelope(ks, M, (M - 1.0) * 2 * d, -2.0 * d, d)


# -------------------------------------------------------------- predicates

@dataclass(frozen=True)
class PredicateReport:
    name: str
    passed: bool
    margin: float          # signed distance to the bound, before slack
    sigma: float = 0.0
    hard: bool = False
    detail: dict = field(default_factory=dict, compare=False)

    def as_dict(self):
        return {"name": self.name, "passed": self.passed, "margin": self.margin,
                "sigma": self.sigma, "hard": self.hard, **self.detail}


def _report(name, margin, sigma, hard=False, **detail):
    ok = bool(margin >= -SLACK * sigma) if math.isfinite(margin) else False
    return PredicateReport(name, ok, float(margin), float(sigma), hard, detail)


def enforce(reports, strict: bool = True):
    """Raise on failed hard predicates, warn on failed soft ones."""
    hard = [r for r in reports if r.hard and not r.passed]
    for r in reports:
        if not r.passed and not r.hard:
            warnings.warn(f"{r.name}: margin {r.margin:.4g} (sigma {r.sigma:.3g})",
                          AsymptoticCheck, stacklevel=2)
    if hard and strict:
        names = ", ".join(f"{r.name} (margin {r.margin:.4g})" for r in hard)
        raise PredicateFailure(f"hard predicate failure: {names}")
    return reports


def sandwich_check(res: MomentResult, gamma: float, rho: float) -> PredicateReport:
    """rho gamma <= Lambda_p(t) <= gamma."""
    lo = res.lam - rho * gamma
    hi = gamma - res.lam
    return _report(f"sandwich[p={res.p},t={res.t:g}]", min(lo, hi), res.lam_se, hard=True,
                   lam=res.lam, lower=rho * gamma, upper=gamma)


def monotonicity_check(lower_p: MomentResult, upper_p: MomentResult) -> PredicateReport:
    """Lambda_p(t) >= Lambda_{p-1}(t)."""
    if upper_p.p != lower_p.p + 1:
        raise ValueError("need consecutive p")
    gap = upper_p.lam - lower_p.lam
    return _report(f"monotone[p={upper_p.p},t={upper_p.t:g}]", gap,
                   math.hypot(upper_p.lam_se, lower_p.lam_se), hard=True)


# ------------------------------------------------------------------ curves

_MODELS = {
    "inverse": lambda t: np.column_stack([np.ones_like(t), 1.0 / t]),
    "log": lambda t: np.column_stack([np.ones_like(t), 1.0 / t, np.log(t) / t]),
}


@dataclass(frozen=True)
class Fit:
    model: str
    coef: np.ndarray
    cov: np.ndarray
    chi2: float
    dof: int
    residual: float     # max |fit - data| over the grid


def fit_extrapolation(t, lam, se, model: str = "inverse") -> Fit:
    """Weighted least squares of Lambda(t) on lambda + c/t (+ b log t / t)."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(lam, dtype=np.float64)
    s = np.asarray(se, dtype=np.float64)
    if model == "auto":
        fits = [fit_extrapolation(t, y, s, m) for m in _MODELS
                if len(t) > _MODELS[m](t[:1]).shape[1]]
        if not fits:
            return fit_extrapolation(t, y, s, "inverse")
        return min(fits, key=lambda f: f.chi2 / max(f.dof, 1))
    X = _MODELS[model](t)
    k = X.shape[1]
    if len(t) < k:
        raise ValueError(f"model {model!r} needs at least {k} points")
    pos = s[s > 0]
    floor = pos.min() * 1e-3 if pos.size else 1.0
    w = 1.0 / np.maximum(s, floor) ** 2
    A = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (w * y))
    cov = np.linalg.inv(A) if pos.size else np.zeros((k, k))
    r = y - X @ coef
    return Fit(model, coef, cov, float((w * r * r).sum()), len(t) - k,
               float(np.abs(r).max()))


@dataclass(frozen=True)
class LyapunovCurve:
    p: int
    kappa: float
    gamma: float
    rho: float
    d: int
    t: np.ndarray
    lam: np.ndarray
    lam_se: np.ndarray
    lambda_hat: float
    lambda_se: float
    fit: Fit
    results: tuple = field(default=(), repr=False, compare=False)

    @property
    def residual(self) -> float:
        return self.fit.residual

    @property
    def last(self):
        return float(self.lam[-1]), float(self.lam_se[-1])

    def rows(self):
        for ti, li, si in zip(self.t, self.lam, self.lam_se):
            yield {"d": self.d, "kappa": self.kappa, "p": self.p, "t": float(ti),
                   "lambda_hat": float(li), "ci_low": float(li - 1.96 * si),
                   "ci_high": float(li + 1.96 * si)}


def curve_from_results(results, kappa: float, gamma: float, rho: float, d: int,
                       model: str = "inverse") -> LyapunovCurve:
    results = sorted(results, key=lambda r: r.t)
    t = np.array([r.t for r in results])
    lam = np.array([r.lam for r in results])
    se = np.array([r.lam_se for r in results])
    f = fit_extrapolation(t, lam, se, model)
    return LyapunovCurve(results[0].p, float(kappa), float(gamma), float(rho), int(d), t, lam,
                         se, float(f.coef[0]), float(math.sqrt(max(f.cov[0, 0], 0.0))), f,
                         tuple(results))


def run_moment(p, kappa, gamma, rho, d, t, replicas, seed, estimator="dual", T=8.0,
               L=None, workers=None) -> MomentResult:
    """One moment run; 'dual' defaults to the infinite lattice, 'direct' to L=16."""
    if estimator == "dual":
        return dual_moment(p, kappa, gamma, rho, t, T, replicas, seed, d=d,
                           L=0 if L is None else L, workers=workers)
    if estimator == "direct":
        cfg = VoterConfig(Torus(16 if not L else L, d), make_simple_random_walk(d), rho,
                          Warmed(T))
        return direct_moment(p, kappa, gamma, t, cfg, replicas, seed, workers=workers)
    raise ValueError(f"unknown estimator {estimator!r}")


def estimate_lyapunov(p: int, kappa: float, gamma: float, rho: float, d: int, t_grid,
                      estimator: str = "dual", replicas: int = 100_000, seed: int = 0,
                      T: float = 8.0, L: int | None = None, model: str = "inverse",
                      workers: int | None = None) -> LyapunovCurve:
    """Lambda_p(t) on ``t_grid`` and its extrapolation to t = infinity.

    The same seed is used at every t, so the curve carries common random
    numbers across the grid.
    """
    ts = [float(x) for x in t_grid]
    if len(ts) < 3 or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_grid must be increasing with at least 3 points")
    res = [run_moment(p, kappa, gamma, rho, d, t, replicas, seed, estimator, T, L, workers)
           for t in ts]
    return curve_from_results(res, kappa, gamma, rho, d, model)


def curve_checks(curve: LyapunovCurve):
    """Sandwich at every t plus the extrapolation sanity bound."""
    out = [sandwich_check(r, curve.gamma, curve.rho) for r in curve.results]
    lo = float((curve.lam - 1.96 * curve.lam_se).min()) - curve.residual
    hi = float((curve.lam + 1.96 * curve.lam_se).max()) + curve.residual
    m = min(curve.lambda_hat - lo, hi - curve.lambda_hat)
    out.append(_report("extrapolation_range", m, curve.lambda_se, lambda_hat=curve.lambda_hat,
                       low=lo, high=hi))
    return out


# ------------------------------------------------------------ named checks

def clumping_check(curve: LyapunovCurve, T_probe: float = 0.1,
                   use_extrapolation: bool = False) -> PredicateReport:
    """lambda_1 - rho gamma >= T rho (1 - rho) gamma^2 / 4.

    Uses Lambda_1 at the largest t by default (a conservative proxy, since the
    curve increases toward its limit); ``use_extrapolation`` switches to the
    fitted limit.
    """
    if curve.p != 1:
        raise ValueError("clumping concerns p = 1")
    lam, se = (curve.lambda_hat, curve.lambda_se) if use_extrapolation else curve.last
    need = 0.25 * T_probe * curve.rho * (1 - curve.rho) * curve.gamma ** 2
    gap = lam - curve.rho * curve.gamma
    r = _report("clumping", gap - need, se, gap=gap, required=need,
                excludes_zero=bool(gap - 1.96 * se > 0))
    return r


@dataclass(frozen=True)
class Gap:
    p: int
    value: float
    std_error: float
    lam_p: float
    lam_prev: float
    paired: bool

    @property
    def ci(self):
        return self.value - 1.96 * self.std_error, self.value + 1.96 * self.std_error


def gap_from_results(prev: MomentResult, cur: MomentResult) -> Gap:
    """Lambda_p - Lambda_{p-1}; paired delta-method error under common seeds."""
    g = cur.lam - prev.lam
    same = (len(prev.log_weights) == len(cur.log_weights)
            and np.array_equal(prev.flags, cur.flags))
    if same:
        keep = cur.flags == 0
        a = np.exp(cur.log_weights[keep] - cur.log_weights[keep].max())
        b = np.exp(prev.log_weights[keep] - prev.log_weights[keep].max())
        z = a / a.mean() / (cur.p * cur.t) - b / b.mean() / (prev.p * prev.t)
        se = float(z.std(ddof=1) / math.sqrt(z.size))
    else:
        se = math.hypot(cur.lam_se, prev.lam_se)
    return Gap(cur.p, g, se, cur.lam, prev.lam, same)


def intermittency_gap(p: int, kappa: float, gamma: float, rho: float, d: int, t: float,
                      replicas: int, seed: int, estimator: str = "dual", T: float = 8.0,
                      L: int | None = None, workers: int | None = None) -> Gap:
    if p < 2:
        raise ValueError("p must be at least 2")
    a = run_moment(p - 1, kappa, gamma, rho, d, t, replicas, seed, estimator, T, L, workers)
    b = run_moment(p, kappa, gamma, rho, d, t, replicas, seed, estimator, T, L, workers)
    return gap_from_results(a, b)


def gap_check(gap: Gap) -> PredicateReport:
    return _report(f"monotone[p={gap.p}]", gap.value, gap.std_error, hard=True,
                   paired=gap.paired)


def jensen_predicate(res_p: MomentResult, res_1: MomentResult) -> PredicateReport:
    """p t Lambda_p(t; gamma) <= t Lambda_1(t; p gamma)."""
    p = res_p.p
    margin = res_1.lam - p * res_p.lam
    return _report(f"jensen[p={p},t={res_p.t:g}]", margin,
                   math.hypot(res_1.lam_se, p * res_p.lam_se))


def jensen_bound_check(p: int, kappa: float, gamma: float, rho: float, d: int, t: float,
                       replicas: int, seed: int, estimator: str = "dual", T: float = 8.0,
                       L: int | None = None, workers: int | None = None) -> PredicateReport:
    if p < 2:
        raise ValueError("p must be at least 2")
    rp = run_moment(p, kappa, gamma, rho, d, t, replicas, seed, estimator, T, L, workers)
    r1 = run_moment(1, kappa, p * gamma, rho, d, t, replicas, seed + 1, estimator, T, L,
                    workers)
    return jensen_predicate(rp, r1)


def slope_checks(kappas, lams, ses, gamma: float, rho: float, d: int,
                 kappa_min: float = 0.5):
    """Finite-difference slopes between adjacent kappa >= kappa_min lie in the envelope."""
    ks = np.asarray(kappas, dtype=np.float64)
    order = np.argsort(ks)
    ks, ls, ss = ks[order], np.asarray(lams)[order], np.asarray(ses)[order]
    out = []
    for i in range(len(ks) - 1):
        k1, k2 = ks[i], ks[i + 1]
        if k1 < kappa_min:
            continue
        slope = (ls[i + 1] - ls[i]) / (k2 - k1)
        sig = math.hypot(ss[i], ss[i + 1]) / (k2 - k1)
        up = (envelope_M(k1, gamma, rho, d) - 1.0) * 2 * d
        out.append(_report(f"slope_upper[{k1:g},{k2:g}]", up - slope, sig, slope=slope,
                           bound=up))
        out.append(_report(f"slope_lower[{k1:g},{k2:g}]", slope + 2 * d, sig, slope=slope,
                           bound=-2.0 * d))
    return out


def continuity_check(lam0: float, se0: float, lam_k: float, se_k: float, kappa: float,
                     d: int) -> PredicateReport:
    """|lambda(kappa) - lambda(0)| <= 2 d kappa."""
    return _report(f"continuity[{kappa:g}]", 2 * d * kappa - abs(lam_k - lam0),
                   math.hypot(se0, se_k))


def superadditivity_check(a: PinnedResult, b: PinnedResult, ab: PinnedResult) -> PredicateReport:
    """exp[(t1+t2) L(t1+t2)] >= exp[t1 L(t1)] exp[t2 L(t2)] for pinned moments."""
    m1, m2, m12 = a.estimate.mean, b.estimate.mean, ab.estimate.mean
    sig = math.sqrt(ab.estimate.std_error ** 2 + (m2 * a.estimate.std_error) ** 2
                    + (m1 * b.estimate.std_error) ** 2)
    return _report("superadditivity", m12 - m1 * m2, sig, lhs=m12, rhs=m1 * m2)


# ---------------------------------------------------------------- dichotomy

@dataclass(frozen=True)
class DichotomyTable:
    rows: list
    checks: list

    def column(self, d, key):
        return [r[key] for r in self.rows if r["d"] == d]


def dichotomy_scan(dims=(2, 5), kappas=(0.0, 1.0, 4.0, 16.0), p: int = 1,
                   gamma: float = 1.0, rho: float = 0.5, t: float = 4.0,
                   replicas: int = 100_000, seed: int = 0, T: float = 8.0,
                   workers: int | None = None) -> DichotomyTable:
    """Lambda_p(t; kappa) across kappa for each dimension, with shape checks."""
    rows, checks = [], []
    for d in dims:
        res = [run_moment(p, k, gamma, rho, d, t, replicas, seed, "dual", T, None, workers)
               for k in kappas]
        for k, r in zip(kappas, res):
            rows.append({"d": d, "kappa": float(k), "p": p, "t": t, "lambda_hat": r.lam,
                         "std_error": r.lam_se, "ci_low": r.ci[0], "ci_high": r.ci[1]})
            checks.append(sandwich_check(r, gamma, rho))
        lam = [r.lam for r in res]
        se = [r.lam_se for r in res]
        i0, i1 = int(np.argmin(kappas)), int(np.argmax(kappas))
        if d >= 5:
            # strong transience: the curve falls toward rho gamma
            sep = (lam[i0] - 1.96 * se[i0]) - (lam[i1] + 1.96 * se[i1])
            checks.append(_report(f"d{d}_decreasing", sep, 0.0))
        elif d <= 2:
            for j in range(len(kappas) - 1):
                checks.append(_report(f"d{d}_not_decreasing[{kappas[j]:g}]",
                                      lam[j + 1] - lam[j], math.hypot(se[j], se[j + 1])))
        checks.extend(slope_checks(kappas, lam, se, gamma, rho, d))
    return DichotomyTable(rows, checks)
