"""Estimators, intervals and log-space aggregation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .errors import HeavyTail

Z95 = float(norm.ppf(0.975))
HEAVY_SHARE = 0.2


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate of E[W] for non-negative weights W.

    ``mean`` and ``std_error`` are on the natural scale; ``log_mean`` is
    accumulated with log-sum-exp so that huge weights do not overflow.
    """

    mean: float
    std_error: float
    replicas: int
    log_mean: float
    ci_low: float
    ci_high: float
    max_share: float = 0.0
    excluded: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def heavy_tail(self) -> bool:
        return self.max_share > HEAVY_SHARE

    @property
    def log_std_error(self) -> float:
        """Delta-method standard error of ``log_mean``."""
        if "rel_se" in self.extra:
            return self.extra["rel_se"]
        if self.mean <= 0:
            return math.inf
        return self.std_error / self.mean

    def as_dict(self) -> dict:
        return {
            "mean": self.mean, "std_error": self.std_error, "replicas": self.replicas,
            "log_mean": self.log_mean, "ci_low": self.ci_low, "ci_high": self.ci_high,
            "max_share": self.max_share, "excluded": self.excluded,
        }


def from_log_weights(logw, z=Z95, excluded=0, warn=True) -> MomentEstimate:
    logw = np.asarray(logw, dtype=np.float64)
    n = logw.size
    if n == 0:
        raise ValueError("no replicas")
    top = float(logw.max())
    scaled = np.exp(logw - top)
    s = float(scaled.sum())
    m_scaled = s / n
    sd_scaled = float(scaled.std(ddof=1)) if n > 1 else 0.0
    log_mean = float(logsumexp(logw) - math.log(n))
    scale = math.exp(top) if top < 700 else math.inf
    mean = m_scaled * scale
    se = sd_scaled / math.sqrt(n) * scale
    share = float(scaled.max() / s)
    if warn and share > HEAVY_SHARE and n > 1:
        warnings.warn(f"top replica carries {share:.1%} of the weight sum", HeavyTail,
                      stacklevel=2)
    rel = sd_scaled / math.sqrt(n) / m_scaled
    return MomentEstimate(mean, se, n, log_mean, mean - z * se, mean + z * se, share,
                          excluded, {"rel_se": rel})


def from_values(values, z=Z95, excluded=0) -> MomentEstimate:
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n == 0:
        raise ValueError("no replicas")
    mean = float(v.mean())
    se = float(v.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    log_mean = math.log(mean) if mean > 0 else -math.inf
    tot = float(np.abs(v).sum())
    share = float(np.abs(v).max() / tot) if tot > 0 else 0.0
    return MomentEstimate(mean, se, n, log_mean, mean - z * se, mean + z * se, share,
                          excluded)


def wilson(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    ph = hits / n
    den = 1.0 + z * z / n
    c = (ph + z * z / (2 * n)) / den
    h = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - h), min(1.0, c + h)


@dataclass(frozen=True)
class Proportion:
    hits: int
    n: int
    ci_low: float
    ci_high: float

    @property
    def p_hat(self) -> float:
        return self.hits / self.n if self.n else math.nan

    @property
    def std_error(self) -> float:
        p = self.p_hat
        return math.sqrt(max(p * (1 - p), 0.0) / self.n) if self.n else math.inf


def proportion(hits, n, z=Z95) -> Proportion:
    lo, hi = wilson(int(hits), int(n), z)
    return Proportion(int(hits), int(n), lo, hi)


def agree(a: float, sa: float, b: float, sb: float, k: float = 3.0) -> bool:
    """|a - b| within k combined standard errors."""
    return abs(a - b) <= k * math.hypot(sa, sb)
