"""Random-walk transition kernels on Z^d, tori, and their analytic transforms."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import (EmptyBox, InvalidDimension, NonConvergedQuadrature,
                     NotStronglyTransient, RecurrentKernel)

WEIGHT_TOL = 1e-12


def _generated_index(vecs, d: int) -> int:
    """Index of the subgroup of Z^d generated by ``vecs`` (0 if not full rank)."""
    rows = [[int(a) for a in v] for v in vecs if any(v)]
    det = 1
    r = 0
    for c in range(d):
        while True:
            nz = [i for i in range(r, len(rows)) if rows[i][c] != 0]
            if not nz:
                return 0
            piv = min(nz, key=lambda i: abs(rows[i][c]))
            rows[r], rows[piv] = rows[piv], rows[r]
            clean = True
            for i in range(r + 1, len(rows)):
                q = rows[i][c] // rows[r][c]
                if q:
                    rows[i] = [a - q * b for a, b in zip(rows[i], rows[r])]
                if rows[i][c] != 0:
                    clean = False
            if clean:
                break
        det *= abs(rows[r][c])
        r += 1
    return det


def _vose(weights: np.ndarray):
    """Alias table (Vose). Returns (prob, alias) with prob in [0, 1]."""
    K = len(weights)
    scaled = np.asarray(weights, dtype=np.float64) * K
    prob = np.ones(K)
    alias = np.arange(K, dtype=np.int64)
    small = [i for i in range(K) if scaled[i] < 1.0]
    large = [i for i in range(K) if scaled[i] >= 1.0]
    sc = scaled.tolist()
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = sc[s]
        alias[s] = g
        sc[g] = (sc[g] + sc[s]) - 1.0
        (small if sc[g] < 1.0 else large).append(g)
    for i in small + large:
        prob[i] = 1.0
    return prob, alias


class Kernel:
    """Shift-invariant finite-support kernel p(0, z) on Z^d.

    Offsets are merged and sorted lexicographically, so two kernels with the
    same law compare equal.
    """

    def __init__(self, offsets, weights, normalize: bool = False):
        offs = np.atleast_2d(np.asarray(offsets, dtype=np.int64))
        w = np.asarray(weights, dtype=np.float64).ravel()
        if offs.shape[0] != w.size or w.size == 0:
            raise ValueError("offsets and weights must be non-empty and aligned")
        if offs.shape[1] < 1:
            raise InvalidDimension("dimension must be positive")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        merged: dict[tuple, float] = {}
        for z, p in zip(map(tuple, offs.tolist()), w.tolist()):
            merged[z] = merged.get(z, 0.0) + p
        keys = sorted(merged)
        offs = np.array(keys, dtype=np.int64).reshape(len(keys), -1)
        w = np.array([merged[z] for z in keys])
        if normalize:
            w = w / w.sum()
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        self.offsets = offs
        self.weights = w
        self.offsets.setflags(write=False)
        self.weights.setflags(write=False)
        if not self.irreducible:
            raise ValueError("support does not generate Z^d")

    @property
    def d(self) -> int:
        return self.offsets.shape[1]

    @property
    def size(self) -> int:
        return self.offsets.shape[0]

    @cached_property
    def irreducible(self) -> bool:
        return _generated_index(self.offsets.tolist(), self.d) == 1

    @cached_property
    def mean(self) -> np.ndarray:
        return self.weights @ self.offsets

    @cached_property
    def covariance(self) -> np.ndarray:
        z = self.offsets - self.mean
        return (z * self.weights[:, None]).T @ z

    @property
    def zero_mean(self) -> bool:
        return bool(np.all(np.abs(self.mean) < 1e-12))

    @property
    def finite_variance(self) -> bool:
        return True

    @cached_property
    def symmetric(self) -> bool:
        return self == dual(self)

    @cached_property
    def separable(self) -> bool:
        """Every offset lies on a coordinate axis (the Fourier symbol splits)."""
        return bool(np.all(np.count_nonzero(self.offsets, axis=1) <= 1))

    @cached_property
    def alias_table(self):
        return _vose(self.weights)

    def __eq__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        return (self.offsets.shape == other.offsets.shape
                and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.offsets.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        return f"Kernel(d={self.d}, size={self.size})"

    def symbol(self, theta: np.ndarray) -> np.ndarray:
        """Characteristic function p_hat(theta) = sum_z p(0,z) exp(i theta.z)."""
        th = np.asarray(theta, dtype=np.float64)
        return np.exp(1j * (th @ self.offsets.T.astype(np.float64))) @ self.weights

    def to_json(self) -> str:
        return json.dumps({"d": self.d, "offsets": self.offsets.tolist(),
                           "weights": [float(x) for x in self.weights]})

    @classmethod
    def from_json(cls, text: str) -> Kernel:
        obj = json.loads(text)
        k = cls(obj["offsets"], obj["weights"])
        if k.d != int(obj["d"]):
            raise ValueError("dimension mismatch in kernel JSON")
        return k


def make_simple_random_walk(d: int) -> Kernel:
    if int(d) != d or d < 1:
        raise InvalidDimension(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    offs = np.concatenate([np.eye(d, dtype=np.int64), -np.eye(d, dtype=np.int64)])
    return Kernel(offs, np.full(2 * d, 1.0 / (2 * d)))


def dual(k: Kernel) -> Kernel:
    """p*(x, y) = p(y, x): negate every offset."""
    return Kernel(-k.offsets, k.weights)


def symmetrize(k: Kernel) -> Kernel:
    offs = np.concatenate([k.offsets, -k.offsets])
    w = np.concatenate([k.weights, k.weights]) / 2.0
    return Kernel(offs, w, normalize=True)


def sample_step(k: Kernel, rng) -> np.ndarray:
    """One increment with law p(0, .), alias method with a single uniform."""
    prob, alias = k.alias_table
    K = k.size
    x = rng.random() * K
    j = int(x)
    if j >= K:
        j = K - 1
    if (x - j) >= prob[j]:
        j = int(alias[j])
    return k.offsets[j].copy()


# ------------------------------------------------------------------- torus

@dataclass(frozen=True)
class Torus:
    L: int
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise InvalidDimension("dimension must be positive")
        if self.L < 4 or self.L % 2:
            raise ValueError("torus side must be an even integer >= 4")
        if self.L ** self.d > 2 ** 31:
            raise MemoryError("torus too large to address")

    @property
    def n_sites(self) -> int:
        return self.L ** self.d

    def coords(self) -> np.ndarray:
        grids = np.indices((self.L,) * self.d).reshape(self.d, -1).T
        return np.ascontiguousarray(grids, dtype=np.int64)

    def index(self, coords) -> np.ndarray:
        c = np.mod(np.asarray(coords, dtype=np.int64), self.L)
        return np.ravel_multi_index(tuple(np.moveaxis(c, -1, 0)), (self.L,) * self.d)

    def source_table(self, k: Kernel) -> np.ndarray:
        """src[y, j] = index of y - z_j: the site that y copies on drawing z_j."""
        if k.d != self.d:
            raise InvalidDimension("kernel and torus dimensions differ")
        c = self.coords()
        out = np.empty((self.n_sites, k.size), dtype=np.int64)
        for j, z in enumerate(k.offsets):
            out[:, j] = self.index(c - z)
        return out

    def shift_table(self, delta) -> np.ndarray:
        """shift[x] = index of x + delta."""
        return np.ascontiguousarray(self.index(self.coords() + np.asarray(delta)),
                                    dtype=np.int64)

    def safe_window(self) -> int:
        return self.L // 2 - 1


# ------------------------------------------------- Fourier quadrature pieces

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _panel_rule(scale: float, n: int):
    """Composite Gauss-Legendre on [-pi, pi] with dyadic panels towards 0.

    ``scale`` is the largest time parameter; panels shrink down to roughly
    1/(16 sqrt(scale)) so the Gaussian peak at theta = 0 is resolved.
    """
    J = max(1, math.ceil(math.log2(math.pi * math.sqrt(max(scale, 1.0))))) + 4
    edges = [0.0] + [math.pi * 2.0 ** -k for k in range(J, -1, -1)]
    x, w = _gl(n)
    nodes, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        h = 0.5 * (b - a)
        nodes.append(a + h * (x + 1.0))
        wts.append(h * w)
    th = np.concatenate(nodes)
    wt = np.concatenate(wts)
    return np.concatenate([-th[::-1], th]), np.concatenate([wt[::-1], wt])


class _AxisFactor:
    """One-dimensional factor of a separable kernel along a single axis."""

    def __init__(self, z: np.ndarray, w: np.ndarray):
        self.z = z.astype(np.float64)
        self.w = w
        self.W = float(w.sum())
        self.k2 = float(w @ self.z ** 2)
        self.k4 = float(w @ self.z ** 4)

    def exponent(self, theta):
        # psi(theta) = W - sum_z w_z e^{i theta z}
        return self.W - np.exp(1j * np.outer(theta, self.z)) @ self.w

    def values(self, us, x, theta, wt):
        """f(u, x) = (2 pi)^{-1} int e^{-i theta x} exp(-u psi(theta)) dtheta."""
        psi = self.exponent(theta)
        ph = np.exp(-1j * theta * x) * wt
        us = np.atleast_1d(np.asarray(us, dtype=np.float64))
        return np.real(np.exp(-np.outer(us, psi)) @ ph) / (2 * math.pi)

    def tail_coef(self, x):
        """First local-CLT correction: f(u, x) ~ (2 pi k2 u)^{-1/2} (1 + c/u)."""
        if self.k2 == 0:
            return 0.0
        return self.k4 / (8 * self.k2 ** 2) - x * x / (2 * self.k2)


def _axis_factors(k: Kernel):
    facs = []
    for a in range(k.d):
        on = k.offsets[:, a] != 0
        facs.append(_AxisFactor(k.offsets[on, a], k.weights[on]))
    return facs


def _transition_separable(k: Kernel, us, x, n, scale):
    theta, wt = _panel_rule(scale, n)
    out = np.ones(np.atleast_1d(us).shape)
    for a, f in enumerate(_axis_factors(k)):
        out = out * f.values(us, x[a], theta, wt)
    return out


def _transition_tensor(k: Kernel, t, x, n, scale):
    # full tensor rule; only practical for small d
    theta, wt = _panel_rule(scale, n)
    d = k.d
    if len(theta) ** d > 5e7:
        raise NotImplementedError("tensor quadrature too large for this dimension")
    grids = np.meshgrid(*([theta] * d), indexing="ij")
    th = np.stack([g.ravel() for g in grids], axis=1)
    wprod = np.ones(th.shape[0])
    for g in np.meshgrid(*([wt] * d), indexing="ij"):
        wprod = wprod * g.ravel()
    phat = k.symbol(th)
    val = np.exp(-t * (1.0 - phat) - 1j * (th @ np.asarray(x, dtype=np.float64)))
    return float(np.real(val @ wprod)) / (2 * math.pi) ** d


def transition_probability(k: Kernel, t: float, x=None, n: int = 16) -> float:
    """p_t(0, x) for the rate-1 continuous-time walk with kernel k."""
    x = np.zeros(k.d, dtype=np.int64) if x is None else np.asarray(x, dtype=np.int64)
    if t == 0:
        return 1.0 if not np.any(x) else 0.0
    if k.separable:
        return float(_transition_separable(k, [t], x, n, t)[0])
    return _transition_tensor(k, t, x, n, t)


def heat_kernel_diagonal(k: Kernel, t: float, tol: float = 1e-10, n: int = 16) -> float:
    """p_t(0, 0) by Fourier quadrature; node doubling guards convergence.

    For non-symmetric kernels the real part of the Fourier integral is
    returned, which is still p_t(0, 0) (the imaginary part integrates to 0).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 1.0
    a = transition_probability(k, t, None, n)
    b = transition_probability(k, t, None, 2 * n)
    if abs(a - b) > tol:
        raise NonConvergedQuadrature(f"p_t(0,0) refinement differs by {abs(a - b):.3g}")
    return b


@dataclass(frozen=True)
class GreenConstants:
    g: float
    g_star: float | None
    quadrature_error: float

    def as_dict(self):
        return {"g": self.g, "g_star": self.g_star, "error": self.quadrature_error}


def _require_transient(k: Kernel, star: bool):
    if not k.symmetric:
        raise ValueError("Green constants are defined here for symmetric kernels")
    if k.d <= 2:
        raise RecurrentKernel(f"d={k.d}: the Green integral diverges")
    if star and k.d <= 4:
        raise NotStronglyTransient(f"d={k.d}: int t p_t(0,0) dt diverges")


def _time_integral(k: Kernel, x, power: int, s0: float, n: int, horizon: float):
    """int_{s0}^inf u^power p_u(0, x) du: quadrature to ``horizon`` plus CLT tail.

    Returns (value, error estimate). The integrand decays like u^{power-d/2};
    the tail uses the first Edgeworth correction, and its neglected next term
    is reported as part of the error.
    """
    d = k.d
    x = np.asarray(x, dtype=np.int64)
    facs = _axis_factors(k) if k.separable else None
    theta, wt = _panel_rule(horizon, n)

    def p(u):
        if facs is None:
            return _transition_tensor(k, u, x, n, horizon)
        v = 1.0
        for a, f in enumerate(facs):
            v *= float(f.values([u], x[a], theta, wt)[0])
        return v

    f = (lambda u: p(u)) if power == 0 else (lambda u: u * p(u))
    # geometric break points keep the adaptive rule on smooth pieces
    pts = [s0]
    b = max(s0, 0.0) + 1.0
    while b < horizon:
        pts.append(b)
        b *= 4.0
    pts.append(horizon)
    val = 0.0
    err = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        r, e = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
        val += r
        err += e
    # tail: C u^{-d/2} (1 + c/u)
    if facs is None:
        cov = k.covariance
        C = 1.0 / math.sqrt((2 * math.pi) ** d * np.linalg.det(cov))
        c = 0.0
    else:
        C = 1.0
        for f_ in facs:
            C /= math.sqrt(2 * math.pi * f_.k2)
        c = sum(f_.tail_coef(float(x[a])) for a, f_ in enumerate(facs))
    e0 = d / 2.0 - power
    T = horizon
    tail = C * (T ** (1 - e0) / (e0 - 1) + c * T ** (-e0) / e0)
    nxt = C * abs(c) ** 2 * T ** (-e0 - 1) / (e0 + 1)
    if facs is None:
        nxt = max(nxt, C * T ** (-e0) / e0)
    return val + tail, err + nxt


def green_constants(k: Kernel, star: bool | None = None, tol: float = 1e-6,
                    n: int = 16, horizon: float = 2000.0) -> GreenConstants:
    """G = int p_t(0,0) dt and G* = int t p_t(0,0) dt.

    Both are computed on the time side: adaptive quadrature of the Fourier
    representation of p_t up to ``horizon`` and a local-CLT tail beyond it.
    The reported error adds the quadrature estimates, the neglected tail term
    and the change under node doubling.
    """
    if star is None:
        star = k.d >= 5
    _require_transient(k, star)
    x0 = np.zeros(k.d, dtype=np.int64)
    g1, e1 = _time_integral(k, x0, 0, 0.0, n, horizon)
    g2, e2 = _time_integral(k, x0, 0, 0.0, 2 * n, horizon)
    err = abs(g2 - g1) + max(e1, e2)
    gs = None
    if star:
        s1, f1 = _time_integral(k, x0, 1, 0.0, n, horizon)
        s2, f2 = _time_integral(k, x0, 1, 0.0, 2 * n, horizon)
        gs = s2
        err = max(err, abs(s2 - s1) + max(f1, f2))
    if not math.isfinite(err) or err > tol:
        raise NonConvergedQuadrature(f"Green quadrature error {err:.3g} above {tol:g}")
    return GreenConstants(g2, gs, err)


def green_function(k: Kernel, x, s: float = 0.0, n: int = 16, horizon: float = 2000.0):
    """int_s^inf p_u(0, x) du with an error estimate."""
    _require_transient(k, False)
    return _time_integral(k, np.asarray(x, dtype=np.int64), 0, float(s), n, horizon)


# ------------------------------------------------------- Dirichlet spectrum

def _laplacian_box(f: np.ndarray) -> np.ndarray:
    """Nearest-neighbour Laplacian with zero values outside the box."""
    out = -2.0 * f.ndim * f
    for a in range(f.ndim):
        sl_hi = [slice(None)] * f.ndim
        sl_lo = [slice(None)] * f.ndim
        sl_hi[a] = slice(1, None)
        sl_lo[a] = slice(None, -1)
        out[tuple(sl_lo)] += f[tuple(sl_hi)]
        out[tuple(sl_hi)] += f[tuple(sl_lo)]
    return out


def dirichlet_eigenvalue(box, kappa: float, tol: float = 1e-10,
                         max_iter: int = 1_000_000) -> float:
    """Principal eigenvalue of kappa*Laplacian on a box with zero boundary.

    ``box`` is the tuple of side lengths (its length is d). Power iteration on
    I + kappa*Laplacian/(4 d kappa), whose spectrum lies in [0, 1].
    """
    shape = tuple(int(s) for s in box)
    if len(shape) == 0:
        raise InvalidDimension("box needs at least one axis")
    if any(s <= 0 for s in shape):
        raise EmptyBox(f"box {shape} has no sites")
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    d = len(shape)
    if kappa == 0:
        return 0.0
    if all(s == 1 for s in shape):
        return -2.0 * d * kappa
    c = 1.0 / (4.0 * d)
    f = np.ones(shape)
    f /= np.linalg.norm(f)
    for _ in range(max_iter):
        lf = _laplacian_box(f)
        rq = float(np.vdot(f, lf))
        # eigenvalue error is quadratic in the residual
        if np.linalg.norm(lf - rq * f) < tol:
            return kappa * rq
        g = f + c * lf
        f = g / np.linalg.norm(g)
    raise NonConvergedQuadrature("power iteration did not converge")
