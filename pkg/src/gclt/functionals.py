"""Radial test functions, their weight norm and Holder check, and the
normalized additive functional of two independent paths.

Test functions are finite signed mixtures of centered isotropic Gaussian
densities, ``f = sum_j c_j g_{s_j}``.  The catalog member ``gdiff`` is
``g_sa - g_sb``; ``gauss`` is a single density (integral one) used for
first-order checks and as a negative membership fixture.

Fourier convention: ``fhat(xi) = (2 pi)^{-d} int e^{i xi.z} f(z) dz``.
``fourier`` is the unnormalized transform ``int e^{i xi.z} f(z) dz``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .kernels import DomainError
from .sampling import PathEnsemble


class MembershipError(ValueError):
    pass


class Mode(enum.Enum):
    DIRECT = "direct"
    RESCALED = "rescaled"


@dataclass(frozen=True)
class TestFunction:
    """Signed mixture of centered Gaussian densities on R^d."""

    __test__ = False  # not a pytest class

    name: str
    dim: int
    coeffs: tuple[float, ...]
    sigmas: tuple[float, ...]
    radial: bool = True

    def profile(self, r2):
        """f as a function of the squared radius."""
        r2 = np.asarray(r2, dtype=float)
        out = np.zeros_like(r2)
        for c, s in zip(self.coeffs, self.sigmas):
            out += c * (2 * np.pi * s * s) ** (-self.dim / 2) * np.exp(-r2 / (2 * s * s))
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            return self.profile(x * x)
        return self.profile(np.sum(x * x, axis=-1))

    def fourier(self, xi):
        """Unnormalized transform, real for these symmetric functions."""
        xi = np.asarray(xi, dtype=float)
        r2 = xi * xi if (self.dim == 1 and (xi.ndim == 0 or xi.shape[-1] != 1)) \
            else np.sum(xi * xi, axis=-1)
        return self.fourier_radial(np.sqrt(r2))

    def fourier_radial(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        for c, s in zip(self.coeffs, self.sigmas):
            out += c * np.exp(-0.5 * (s * rho) ** 2)
        return out

    def fhat(self, xi):
        return (2 * np.pi) ** (-self.dim) * self.fourier(xi)

    @property
    def integral(self) -> float:
        return float(sum(self.coeffs))

    @property
    def abs_integral_bound(self) -> float:
        return float(sum(abs(c) for c in self.coeffs))

    def is_member(self, tol: float = 1e-12) -> bool:
        """Zero-integral condition (the moment condition always holds here)."""
        return abs(self.integral) <= tol * max(self.abs_integral_bound, 1.0)

    def scaled(self, c: float) -> "TestFunction":
        return TestFunction(f"{c:g}*{self.name}", self.dim,
                            tuple(c * a for a in self.coeffs), self.sigmas)

    def dilated(self, lam: float) -> "TestFunction":
        """x -> lam^d f(lam x)."""
        return TestFunction(f"{self.name}@{lam:g}", self.dim, self.coeffs,
                            tuple(s / lam for s in self.sigmas))

    def __add__(self, other: "TestFunction") -> "TestFunction":
        if other.dim != self.dim:
            raise DomainError("dimension mismatch")
        return TestFunction(f"{self.name}+{other.name}", self.dim,
                            self.coeffs + other.coeffs, self.sigmas + other.sigmas)


def gaussian_diff(d: int, sa: float, sb: float) -> TestFunction:
    if not 0 < sa < sb:
        raise DomainError(f"need 0 < sa < sb, got sa={sa}, sb={sb}")
    return TestFunction(f"gdiff:sa={sa:g},sb={sb:g}", d, (1.0, -1.0), (sa, sb))


def gaussian_density(d: int, s: float) -> TestFunction:
    if not s > 0:
        raise DomainError("width must be positive")
    return TestFunction(f"gauss:s={s:g}", d, (1.0,), (s,))


def zero_function(d: int) -> TestFunction:
    return TestFunction("zero", d, (), ())


def parse_test_function(text: str, d: int) -> TestFunction:
    """``"gdiff:sa=1.0,sb=2.0"`` or ``"gauss:s=1"`` (case-insensitive)."""
    name, _, body = text.strip().partition(":")
    kv = {}
    for item in filter(None, (p.strip() for p in body.split(","))):
        k, eq, v = item.partition("=")
        if not eq:
            raise DomainError(f"malformed parameter {item!r}")
        kv[k.strip().lower()] = float(v)
    name = name.strip().lower()
    if name == "gdiff" and set(kv) == {"sa", "sb"}:
        return gaussian_diff(d, kv["sa"], kv["sb"])
    if name == "gauss" and set(kv) == {"s"}:
        return gaussian_density(d, kv["s"])
    raise DomainError(f"unknown test function {text!r}")


def _sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class WeightNorm:
    value: float
    beta_used: float
    abs_integral: float
    moment: float
    member: bool


def _radial_abs_integral(f: TestFunction, power: float) -> float:
    """int |f(z)| |z|^power dz by radial reduction, split at sign changes."""
    d = f.dim
    integrand = lambda r: abs(float(f.profile(r * r))) * r ** (power + d - 1)
    smax = max(f.sigmas) if f.sigmas else 1.0
    rs = np.linspace(0, 12 * smax, 4001)
    vals = f.profile(rs * rs)
    flips = np.nonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))[0]
    prof = lambda r: float(f.profile(r * r))
    cuts = [optimize.brentq(prof, rs[i], rs[i + 1], xtol=1e-15) for i in flips
            if vals[i] != 0 and vals[i + 1] != 0]
    pts = [0.0, *cuts, 12 * smax, 40 * smax]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += integrate.quad(integrand, a, b, limit=200, epsabs=1e-14, epsrel=1e-12)[0]
    # the tail must be negligible and the integrand must decay faster than 1/r
    far = [integrand(r) * r for r in (40 * smax, 80 * smax, 160 * smax)]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            tail = integrate.quad(integrand, 40 * smax, np.inf, limit=200)[0]
        except integrate.IntegrationWarning:
            tail = np.inf
    bound = 1e-8 * max(total, 1e-300) + 1e-14
    if not np.isfinite(tail) or tail > bound or max(far) > bound:
        raise MembershipError(f"{f.name}: tail of weighted |f| does not decay")
    return _sphere_area(d) * (total + tail)


def weight_norm(f: TestFunction, H: float, d: int | None = None) -> WeightNorm:
    """N(f) = int |f(z)| (1 + |z|^{2/H - d}) dz."""
    d = f.dim if d is None else d
    if d != f.dim:
        raise DomainError("dimension mismatch")
    beta = 2.0 / H - d
    if beta <= 0:
        raise DomainError(f"2/H - d must be positive (H={H}, d={d})")
    if not f.coeffs:
        return WeightNorm(0.0, beta, 0.0, 0.0, True)
    a = _radial_abs_integral(f, 0.0)
    m = _radial_abs_integral(f, beta)
    return WeightNorm(a + m, beta, a, m, f.is_member())


def holder_check(f: TestFunction, H: float, d: int | None = None, trials: int = 10_000,
                 seed: int = 0, alphas=None) -> float:
    """Largest value of |fhat(x)-fhat(y)| - (2pi)^{-d} N(f) |x-y|^alpha.

    ``alphas=None`` draws alpha uniformly on [0, cap] per trial, with
    cap = min(2/H - d, 1); the endpoints and midpoint are always included.
    """
    d = f.dim if d is None else d
    nf = weight_norm(f, H, d).value
    cap = min(2.0 / H - d, 1.0)
    rng = np.random.default_rng(seed)
    smin = min(f.sigmas) if f.sigmas else 1.0
    # radii spread over several decades around the frequency scale of f
    scale = 10.0 ** rng.uniform(-3, 1.5, size=(trials, 1)) / smin
    x = rng.standard_normal((trials, d)) * scale
    close = rng.random(trials) < 0.5
    step = rng.standard_normal((trials, d)) * scale * 10.0 ** rng.uniform(-4, 0, (trials, 1))
    y = np.where(close[:, None], x + step, rng.standard_normal((trials, d)) * scale)
    if alphas is None:
        a = rng.uniform(0, cap, trials)
        a[:3] = (0.0, cap / 2, cap)
    else:
        a = np.resize(np.asarray(alphas, dtype=float), trials)
    if np.any(a < 0) or np.any(a > cap + 1e-15):
        raise DomainError(f"alpha must lie in [0, {cap}]")
    dist = np.linalg.norm(x - y, axis=1)
    lhs = np.abs(f.fhat(x) - f.fhat(y))
    # x == y: both sides vanish
    bound = (2 * np.pi) ** (-d) * nf * np.where(dist == 0, 0.0, dist ** a)
    return float(np.max(lhs - bound))


# --------------------------------------------------------------------------
# grid double integrals


def trapezoid_weights(n_points: int, h: float, i0: int, i1: int) -> np.ndarray:
    """Weights of the trapezoid rule on indices [i0, i1] of a uniform grid."""
    w = np.zeros(n_points)
    if i1 > i0:
        w[i0:i1 + 1] = h
        w[i0] = w[i1] = h / 2
    return w


def _index_of(grid_dt: float, t: float, n_points: int) -> int:
    i = round(t / grid_dt)
    if abs(i * grid_dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= i < n_points:
        raise DomainError(f"time {t} is not a grid point (dt={grid_dt})")
    return int(i)


def rect_weights(pair, rect):
    """Trapezoid weight vectors for ``rect = (a1, b1, a2, b2)`` on the pair's grids."""
    e1, e2 = pair
    a1, b1, a2, b2 = rect
    n1, n2 = e1.grid.n_steps + 1, e2.grid.n_steps + 1
    i0, i1 = _index_of(e1.grid.dt, a1, n1), _index_of(e1.grid.dt, b1, n1)
    j0, j1 = _index_of(e2.grid.dt, a2, n2), _index_of(e2.grid.dt, b2, n2)
    if i1 < i0 or j1 < j0:
        raise DomainError(f"empty or reversed rectangle {rect}")
    return (trapezoid_weights(n1, e1.grid.dt, i0, i1),
            trapezoid_weights(n2, e2.grid.dt, j0, j1))


def grid_double_integrals(pair, funcs, rects, shift=None, chunk: int = 32) -> np.ndarray:
    """Trapezoid integrals of ``g(|X1_u - X2_v - shift|^2)`` over rectangles.

    ``funcs`` are callables of the squared distance; ``rects`` are
    ``(a1, b1, a2, b2)`` tuples in the ensembles' own time units.
    Returns an array of shape ``(len(funcs), len(rects), n_paths)``.
    """
    e1, e2 = pair
    if e1.n_paths != e2.n_paths or e1.dim != e2.dim:
        raise DomainError("ensembles must have matching n_paths and dim")
    weights = [rect_weights(pair, r) for r in rects]
    x1 = e1.with_origin()
    x2 = e2.with_origin()
    if shift is not None:
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (e1.dim,))
    out = np.empty((len(funcs), len(rects), e1.n_paths))
    for start in range(0, e1.n_paths, chunk):
        sl = slice(start, min(start + chunk, e1.n_paths))
        r2 = np.zeros((sl.stop - sl.start, x1.shape[2], x2.shape[2]))
        for c in range(e1.dim):
            diff = x1[sl, c, :, None] - x2[sl, c, None, :]
            if shift is not None:
                diff -= shift[c]
            r2 += diff * diff
        for k, g in enumerate(funcs):
            vals = g(r2)
            for j, (w1, w2) in enumerate(weights):
                out[k, j, sl] = (vals @ w2) @ w1
    return out


def _rescaled_profile(f: TestFunction, n: float, H: float):
    s2 = n ** (2 * H)
    return lambda r2: f.profile(s2 * r2)


def functional_on_rectangles(pair, f: TestFunction, H: float, n_values, rects,
                             mode: Mode = Mode.RESCALED, chunk: int = 32) -> np.ndarray:
    """F_n over rectangles ``(a1, b1, a2, b2)`` in limit-time units.

    Output shape ``(len(n_values), len(rects), n_paths)``.  RESCALED mode
    reuses one ensemble for every n; DIRECT mode needs exactly one n and
    ensembles sampled on the dilated time axis.
    """
    e1, _ = pair
    d = e1.dim
    if f.dim != d:
        raise DomainError("test function and ensemble dimensions differ")
    n_values = [float(n) for n in np.atleast_1d(n_values)]
    if mode is Mode.RESCALED:
        funcs = [_rescaled_profile(f, n, H) for n in n_values]
        norms = np.array([n ** ((H * d + 2) / 2) for n in n_values])
        raw = grid_double_integrals(pair, funcs, rects, chunk=chunk)
        return raw * norms[:, None, None]
    if len(n_values) != 1:
        raise DomainError("DIRECT mode evaluates a single n per ensemble")
    (n,) = n_values
    scaled = [tuple(n * t for t in r) for r in rects]
    raw = grid_double_integrals(pair, [f.profile], scaled, chunk=chunk)
    return raw * n ** ((H * d - 2) / 2)


def additive_functional(pair, f: TestFunction, H: float, n_scale: float, t1: float,
                        t2: float, mode: Mode = Mode.RESCALED) -> np.ndarray:
    """Per-path F_n(t1, t2) = n^{(Hd-2)/2} int_0^{n t1} int_0^{n t2} f(X1_u - X2_v).

    RESCALED: ensembles on [0, t1], [0, t2]; the integrand is
    ``n^{(Hd+2)/2} f(n^H (X1_u - X2_v))``, equal in law by self-similarity.
    DIRECT: ensembles on [0, n t1], [0, n t2].
    """
    e1, e2 = pair
    if mode is Mode.RESCALED:
        expect = (t1, t2)
    else:
        expect = (n_scale * t1, n_scale * t2)
    got = (e1.grid.t_max, e2.grid.t_max)
    if not np.allclose(got, expect, rtol=1e-12):
        raise DomainError(f"{mode.value} mode needs grids on {expect}, got {got}")
    return functional_on_rectangles(pair, f, H, [n_scale], [(0.0, t1, 0.0, t2)], mode)[0, 0]


def expected_functional(kernel, f: TestFunction, H: float, n: float, grid1, grid2,
                        rect=None) -> float:
    """Exact E[F_n] of the RESCALED trapezoid estimator on the given grids.

    E g_s(n^H Z) = (2 pi (s^2 + n^{2H} V))^{-d/2} with V = R(u,u) + R(v,v).
    Nonzero at finite n even when int f = 0; it decays like n^{(Hd-2)/2}.
    """
    d = f.dim
    rect = rect or (0.0, grid1.t_max, 0.0, grid2.t_max)
    t1 = np.concatenate([[0.0], grid1.times])
    t2 = np.concatenate([[0.0], grid2.times])
    w1 = trapezoid_weights(len(t1), grid1.dt, _index_of(grid1.dt, rect[0], len(t1)),
                           _index_of(grid1.dt, rect[1], len(t1)))
    w2 = trapezoid_weights(len(t2), grid2.dt, _index_of(grid2.dt, rect[2], len(t2)),
                           _index_of(grid2.dt, rect[3], len(t2)))
    var = kernel.variance(t1)[:, None] + kernel.variance(t2)[None, :]
    s2 = n ** (2 * H)
    mean = sum(c * (2 * np.pi * (s * s + s2 * var)) ** (-d / 2)
               for c, s in zip(f.coeffs, f.sigmas))
    return float(n ** ((H * d + 2) / 2) * (w1 @ mean @ w2))
