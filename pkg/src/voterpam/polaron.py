"""Radial variational lower bound for the polaron constant in R^5, and the
large-kappa prediction built from it.

P = sup_{|f|_2 = 1} [ C(f) - D(f) ],   C(f) = int int f^2(x) f^2(y) / (16 pi^2 |x - y|),
D(f) = |grad f|_2^2. Under f -> lam^{5/2} f(lam .) the two terms scale as lam and
lam^2, so sup over scales of C - D equals C^2 / (4 D), which is what the solver
maximizes on a fixed grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve_banded

from .errors import DimensionTooLow, NonPositiveResult
from .kernels import GreenConstants, green_constants, make_simple_random_walk

S4 = 8.0 * math.pi ** 2 / 3.0     # area of the unit 4-sphere
COULOMB = 1.0 / (16.0 * math.pi ** 2)


@dataclass(frozen=True)
class RadialProfile:
    """Values of a radial function on a uniform grid of [0, R]."""

    r: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        f = np.asarray(self.f, dtype=np.float64)
        if r.ndim != 1 or r.shape != f.shape or r.size < 5:
            raise ValueError("need matching 1-d grids with at least 5 points")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("radii must start at 0 and increase")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "f", f)

    @classmethod
    def from_function(cls, fn, R: float, n: int) -> RadialProfile:
        r = np.linspace(0.0, R, n)
        return cls(r, fn(r))

    @property
    def R(self) -> float:
        return float(self.r[-1])

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def norm(self) -> float:
        return math.sqrt(S4 * simpson(self.f ** 2 * self.r ** 4, x=self.r))

    def normalized(self) -> RadialProfile:
        return RadialProfile(self.r, self.f / self.norm)

    def scaled(self, lam: float) -> RadialProfile:
        """f_lam(r) = lam^{5/2} f(lam r), sampled on the grid r / lam."""
        return RadialProfile(self.r / lam, self.f * lam ** 2.5)

    def boundary_ratio(self) -> float:
        top = float(np.abs(self.f).max())
        return abs(float(self.f[-1])) / top if top > 0 else 0.0


def dirichlet_energy(prof: RadialProfile) -> float:
    """S_4 int f'(r)^2 r^4 dr with central differences and Simpson's rule."""
    fp = np.gradient(prof.f, prof.r, edge_order=2)
    return float(S4 * simpson(fp * fp * prof.r ** 4, x=prof.r))


def _angular_rule(n: int):
    # two Gauss-Legendre panels on [0, pi], the first one finer near phi = 0
    x, w = np.polynomial.legendre.leggauss(n)
    cut = math.pi / 4
    a = 0.5 * cut * (x + 1.0)
    b = cut + 0.5 * (math.pi - cut) * (x + 1.0)
    phi = np.concatenate([a, b])
    wt = np.concatenate([0.5 * cut * w, 0.5 * (math.pi - cut) * w])
    return np.cos(phi), wt * np.sin(phi) ** 3 * 0.75   # int_0^pi sin^3 = 4/3


def angular_kernel(r, s, nodes: int = 48) -> np.ndarray:
    """Average of 1/(16 pi^2 |x - y|) over the unit sphere, |x| = r, |y| = s."""
    r = np.asarray(r, dtype=np.float64)[..., None]
    s = np.asarray(s, dtype=np.float64)[..., None]
    c, w = _angular_rule(nodes)
    d2 = r * r + s * s - 2.0 * r * s * c
    with np.errstate(divide="ignore"):
        vals = np.where(d2 > 0, 1.0 / np.sqrt(np.maximum(d2, 1e-300)), 0.0)
    return COULOMB * (vals * w).sum(axis=-1)


@lru_cache(maxsize=8)
def _unit_kernel(n: int, nodes: int) -> np.ndarray:
    # kernel on the grid 0, 1, ..., n-1; homogeneous of degree -1
    i = np.arange(n, dtype=np.float64)
    K = np.empty((n, n))
    for a in range(n):
        K[a, a:] = angular_kernel(np.full(n - a, i[a]), i[a:], nodes)
        K[a:, a] = K[a, a:]
    K[0, 0] = 0.0
    K.setflags(write=False)
    return K


def _simpson_weights(r: np.ndarray) -> np.ndarray:
    return simpson(np.eye(r.size), x=r)


def _grid_kernel(r: np.ndarray, nodes: int) -> np.ndarray:
    h = r[1] - r[0]
    if not np.allclose(np.diff(r), h, rtol=1e-12, atol=0):
        raise ValueError("coulomb energy needs a uniform grid")
    return _unit_kernel(r.size, nodes) / h


def coulomb_energy(prof: RadialProfile, nodes: int = 48) -> float:
    """int int f^2 f^2 / (16 pi^2 |x - y|) via the radial mass density S_4 r^4 f^2."""
    w = _simpson_weights(prof.r)
    u = w * S4 * prof.r ** 4 * prof.f ** 2
    return float(u @ _grid_kernel(prof.r, nodes) @ u)


def functional(prof: RadialProfile, nodes: int = 48) -> float:
    return coulomb_energy(prof, nodes) - dirichlet_energy(prof)


def scale_optimum(prof: RadialProfile, nodes: int = 48):
    """(lam*, C^2 / 4D) for a unit-norm profile."""
    C = coulomb_energy(prof, nodes)
    D = dirichlet_energy(prof)
    return C / (2.0 * D), C * C / (4.0 * D)


def gaussian_profile(R: float, n: int, width: float) -> RadialProfile:
    return RadialProfile.from_function(lambda r: np.exp(-0.5 * (r / width) ** 2), R, n).normalized()


def gaussian_scan(R: float, n: int, widths=None, nodes: int = 48):
    """Best scale-optimised Gaussian over a width scan: (value, width)."""
    widths = np.linspace(R / 10, R / 5, 11) if widths is None else widths
    best = (-math.inf, None)
    for wd in widths:
        v = scale_optimum(gaussian_profile(R, n, float(wd)), nodes)[1]
        if v > best[0]:
            best = (v, float(wd))
    return best


# --------------------------------------------------------------- the solver

class _Objective:
    """log C^2 / (4 D N^3) with trapezoid masses and staggered differences."""

    def __init__(self, n: int, R: float, nodes: int):
        self.h = R / (n - 1)
        self.r = np.linspace(0.0, R, n)
        m = S4 * self.h * self.r ** 4
        m[-1] *= 0.5
        self.m = m
        rm = self.r[:-1] + 0.5 * self.h
        self.c = S4 * rm ** 4 / self.h          # stiffness on each cell
        self.K = _unit_kernel(n, nodes) / self.h

    def parts(self, f):
        g = self.m * f * f
        Kg = self.K @ g
        C = float(g @ Kg)
        df = np.diff(f)
        D = float((self.c * df * df).sum())
        N = float((self.m * f * f).sum())
        return C, D, N, Kg

    def value(self, f) -> float:
        C, D, N, _ = self.parts(f)
        if C <= 0 or D <= 0:
            return -math.inf
        return math.log(C * C / (4.0 * D * N ** 3))

    def gradient(self, f):
        C, D, N, Kg = self.parts(f)
        gC = 4.0 * self.m * f * Kg
        df = np.diff(f)
        gD = np.zeros_like(f)
        gD[:-1] -= 2.0 * self.c * df
        gD[1:] += 2.0 * self.c * df
        gN = 2.0 * self.m * f
        return 2.0 * gC / C - gD / D - 3.0 * gN / N, D, N

    def precondition(self, g, D, N):
        """Solve (A / D + M / N) x = g, A the stiffness and M the mass matrix."""
        n = g.size
        ab = np.zeros((3, n))
        diag = self.m / N
        diag[:-1] += self.c / D
        diag[1:] += self.c / D
        ab[1] = diag
        ab[0, 1:] = -self.c / D
        ab[2, :-1] = -self.c / D
        # pin the outer boundary value
        ab[1, -1], ab[0, -1], ab[2, -2] = 1.0, 0.0, 0.0
        rhs = g.copy()
        rhs[-1] = 0.0
        return solve_banded((1, 1), ab, rhs)


@dataclass(frozen=True)
class P5Result:
    p5_lower_bound: float
    profile: RadialProfile          # optimiser at its optimal scale, unit norm
    grid_profile: RadialProfile     # same shape on the working grid [0, R]
    scale: float
    coulomb: float
    dirichlet: float
    gaussian_value: float
    refinement_delta: float
    iterations: int
    history: np.ndarray = field(repr=False, compare=False)

    def as_dict(self):
        return {"p5_lower_bound": self.p5_lower_bound, "refinement_delta": self.refinement_delta,
                "gaussian_value": self.gaussian_value, "scale": self.scale,
                "iterations": self.iterations}


def solve_P5(n: int = 512, R: float = 30.0, iterations: int = 2000, step: float = 1.0,
             tol: float = 1e-10, nodes: int = 48) -> P5Result:
    """Preconditioned projected gradient ascent for the radial problem.

    The iterate is renormalised every step and the infinitesimal dilation
    direction is projected out, so the profile keeps the scale of its
    Gaussian start; the scale is optimised in closed form at the end.
    """
    if n < 16 or R <= 0:
        raise ValueError("need n >= 16 and R > 0")
    g_val, width = gaussian_scan(R, n, nodes=nodes)
    obj = _Objective(n, R, nodes)
    f = gaussian_profile(R, n, width).f.copy()
    f[-1] = 0.0
    cur = obj.value(f)
    hist = [cur]
    alpha = step
    it = 0
    for it in range(1, iterations + 1):
        g, D, N = obj.gradient(f)
        dirn = obj.precondition(g, D, N)
        gen = 2.5 * f + obj.r * np.gradient(f, obj.h)
        gen[-1] = 0.0
        pg = obj.precondition(gen, D, N)
        # project out dilations in the preconditioned metric
        den = float(pg @ gen)
        if den > 0:
            dirn = dirn - (dirn @ gen) / den * pg
        slope = float(g @ dirn)
        if slope <= 0:
            break
        accepted = False
        while alpha > 1e-14:
            trial = f + alpha * dirn
            v = obj.value(trial)
            if v > cur:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        gain = v - cur
        f = trial / math.sqrt((obj.m * trial * trial).sum())
        cur = v
        hist.append(cur)
        alpha = min(alpha * 2.0, 1e3 * step)
        if gain < tol:
            break
    grid = RadialProfile(obj.r, f).normalized()
    lam, val = scale_optimum(grid, nodes)
    if val < g_val:
        # discretisation mismatch; keep the better certified profile
        grid = gaussian_profile(R, n, width)
        lam, val = scale_optimum(grid, nodes)
    if not val > 0:
        raise NonPositiveResult(f"best value {val} is not positive")
    C = coulomb_energy(grid, nodes)
    D = dirichlet_energy(grid)
    fine = RadialProfile.from_function(lambda r: np.interp(r, grid.r, grid.f), R, 2 * n - 1)
    delta = abs(scale_optimum(fine.normalized(), nodes)[1] - val)
    return P5Result(val, grid.scaled(lam), grid, lam, C, D, g_val, delta, it,
                    np.exp(np.array(hist)))


# ---------------------------------------------------------------- conjecture

@dataclass(frozen=True)
class ConjectureInputs:
    d: int
    p: int
    rho: float
    gamma: float
    green: GreenConstants
    p5_lower_bound: float = 0.0

    def __post_init__(self):
        if self.d < 5:
            raise DimensionTooLow(f"d={self.d}: the prediction needs d >= 5")


def conjecture_inputs(d: int, p: int, rho: float, gamma: float,
                      p5_lower_bound: float | None = None, tol: float = 1e-6):
    if d < 5:
        raise DimensionTooLow(f"d={d}: the prediction needs d >= 5")
    G = green_constants(make_simple_random_walk(d), star=True, tol=tol)
    if p5_lower_bound is None:
        p5_lower_bound = solve_P5().p5_lower_bound if d == 5 else 0.0
    return ConjectureInputs(d, p, rho, gamma, G, p5_lower_bound)


def conjecture_terms(inp: ConjectureInputs) -> dict:
    a = inp.rho * (1 - inp.rho) * inp.gamma ** 2
    G = inp.green
    green = a * G.g_star / G.g
    pol = 0.0
    if inp.d == 5:
        pol = (2 * inp.d) ** 5 * (a * inp.p / G.g) ** 2 * inp.p5_lower_bound
    return {"green_term": green, "polaron_term": pol, "total": green + pol,
            "polaron_is_lower_bound": inp.d == 5}


def conjecture_rhs(inp: ConjectureInputs) -> float:
    """Predicted lim 2 d kappa (lambda_p - rho gamma); a lower bound when d = 5."""
    if inp.d < 5:
        raise DimensionTooLow(f"d={inp.d}: the prediction needs d >= 5")
    return conjecture_terms(inp)["total"]


@dataclass(frozen=True)
class TrendReport:
    kappas: tuple
    scaled: tuple          # 2 d kappa (lambda - rho gamma)
    rhs: float
    ratios: tuple
    flattening: bool
    in_band: bool

    def as_dict(self):
        return {"kappas": list(self.kappas), "scaled": list(self.scaled), "rhs": self.rhs,
                "ratios": list(self.ratios), "flattening": self.flattening,
                "in_band": self.in_band}


def conjecture_trend(inp: ConjectureInputs, kappas, lambdas, std_errors=None,
                     band=(0.1, 10.0)) -> TrendReport:
    """Is 2 d kappa (lambda(kappa) - rho gamma) levelling off near the prediction?

    Diagnostic only. The sequence counts as flattening when it stays positive
    and its last increment is no larger in size than its first (within noise).
    """
    ks = np.asarray(kappas, dtype=np.float64)
    lam = np.asarray(lambdas, dtype=np.float64)
    se = np.zeros_like(lam) if std_errors is None else np.asarray(std_errors, dtype=np.float64)
    order = np.argsort(ks)
    ks, lam, se = ks[order], lam[order], se[order]
    scaled = 2 * inp.d * ks * (lam - inp.rho * inp.gamma)
    noise = 2 * inp.d * ks * se
    rhs = conjecture_rhs(inp)
    ratios = tuple(float(x / rhs) if rhs > 0 else 0.0 for x in scaled)
    flat = False
    if len(scaled) >= 3 and np.all(scaled + 3 * noise > 0):
        inc = np.diff(scaled)
        slack = 3 * math.hypot(noise[-1], noise[-2]) + 1e-12 * max(1.0, abs(scaled[-1]))
        flat = bool(abs(inc[-1]) <= abs(inc[0]) + slack)
    in_band = bool(rhs > 0 and band[0] <= ratios[-1] <= band[1])
    return TrendReport(tuple(ks.tolist()), tuple(scaled.tolist()), float(rhs), ratios, flat,
                       in_band)
