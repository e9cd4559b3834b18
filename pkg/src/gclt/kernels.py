"""Covariance kernels of self-similar Gaussian processes and numerical
diagnostics of the nondeterminism / increment hypotheses.

Three families are catalogued, all centered, vanishing at the origin and
self-similar with exponent ``hurst``:

* fractional Brownian motion ``fbm:H=...``
* bifractional Brownian motion ``bifbm:H0=...,K0=...`` (exponent H0*K0)
* subfractional Brownian motion ``subfbm:H=...``
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class SingularGramWarning(RuntimeWarning):
    pass


class Family(enum.Enum):
    FBM = "fbm"
    BIFRACTIONAL = "bifbm"
    SUBFRACTIONAL = "subfbm"


_PARAM_NAMES = {
    Family.FBM: ("H",),
    Family.BIFRACTIONAL: ("H0", "K0"),
    Family.SUBFRACTIONAL: ("H",),
}


@dataclass(frozen=True)
class CovarianceKernel:
    """Covariance R(s, t) of one scalar component of the process."""

    family: Family
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        names = _PARAM_NAMES[self.family]
        if len(self.params) != len(names):
            raise DomainError(f"{self.family.value} expects parameters {names}")
        if self.family is Family.BIFRACTIONAL:
            h0, k0 = self.params
            if not (0 < h0 < 1 and 0 < k0 <= 1):
                raise DomainError(f"bifbm needs H0 in (0,1), K0 in (0,1]; got {self.params}")
        else:
            (h,) = self.params
            if not 0 < h < 1:
                raise DomainError(f"{self.family.value} needs H in (0,1); got {h}")

    @property
    def hurst(self) -> float:
        if self.family is Family.BIFRACTIONAL:
            return self.params[0] * self.params[1]
        return self.params[0]

    def __call__(self, s, t):
        """Vectorised covariance; broadcasts ``s`` against ``t``."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(s < 0) or np.any(t < 0):
            raise DomainError("covariance is defined for nonnegative times only")
        if self.family is Family.FBM:
            h2 = 2.0 * self.params[0]
            return 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
        if self.family is Family.BIFRACTIONAL:
            h0, k0 = self.params
            h2 = 2.0 * h0
            return 2.0**-k0 * ((t**h2 + s**h2) ** k0 - np.abs(t - s) ** (h2 * k0))
        h2 = 2.0 * self.params[0]
        return t**h2 + s**h2 - 0.5 * ((t + s) ** h2 + np.abs(t - s) ** h2)

    def gram(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        g = self(times[:, None], times[None, :])
        return 0.5 * (g + g.T)

    def variance(self, t):
        t = np.asarray(t, dtype=float)
        return self(t, t)

    def spec(self) -> str:
        names = _PARAM_NAMES[self.family]
        body = ",".join(f"{n}={p:g}" for n, p in zip(names, self.params))
        return f"{self.family.value}:{body}"

    def __str__(self):
        return self.spec()


def fbm(H: float) -> CovarianceKernel:
    return CovarianceKernel(Family.FBM, (H,))


def bifbm(H0: float, K0: float) -> CovarianceKernel:
    return CovarianceKernel(Family.BIFRACTIONAL, (H0, K0))


def subfbm(H: float) -> CovarianceKernel:
    return CovarianceKernel(Family.SUBFRACTIONAL, (H,))


def parse_kernel(text: str) -> CovarianceKernel:
    """Parse ``"fbm:H=0.75"``, ``"bifbm:H0=0.6,K0=0.8"`` or ``"subfbm:H=0.6"``.

    Names and keys are case-insensitive; unknown or missing keys raise
    :class:`DomainError`.
    """
    name, _, body = text.strip().partition(":")
    try:
        family = Family(name.strip().lower())
    except ValueError:
        raise DomainError(f"unknown kernel family {name!r}") from None
    expected = {n.lower(): n for n in _PARAM_NAMES[family]}
    values = {}
    for item in filter(None, (p.strip() for p in body.split(","))):
        key, eq, val = item.partition("=")
        key = key.strip().lower()
        if not eq or key not in expected:
            raise DomainError(f"unknown parameter {item!r} for {family.value}")
        values[expected[key]] = float(val)
    missing = [n for n in _PARAM_NAMES[family] if n not in values]
    if missing:
        raise DomainError(f"missing parameters {missing} for {family.value}")
    return CovarianceKernel(family, tuple(values[n] for n in _PARAM_NAMES[family]))


def eval_cov(kernel: CovarianceKernel, s: float, t: float) -> float:
    if s < 0 or t < 0:
        raise DomainError(f"negative time ({s}, {t})")
    return float(kernel(s, t))


def increment_variance(kernel: CovarianceKernel, t, h):
    """Var(X_{t+h} - X_t) = R(t+h,t+h) - 2R(t+h,t) + R(t,t)."""
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise DomainError("increment length must be positive")
    if np.any(t < 0):
        raise DomainError("increment start must be nonnegative")
    out = kernel(t + h, t + h) - 2.0 * kernel(t + h, t) + kernel(t, t)
    return float(out) if out.ndim == 0 else out


def check_self_similarity(kernel: CovarianceKernel, c: float, grid) -> float:
    """Max over grid pairs of |R(cs,ct) - c^{2H} R(s,t)| / (1 + |c^{2H} R(s,t)|)."""
    if c <= 0:
        raise DomainError("scale factor must be positive")
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0) or len(np.unique(grid)) != len(grid):
        raise DomainError("grid times must be positive and distinct")
    s, t = grid[:, None], grid[None, :]
    scaled = c ** (2 * kernel.hurst) * kernel(s, t)
    return float(np.max(np.abs(kernel(c * s, c * t) - scaled) / (1.0 + np.abs(scaled))))


def increment_gram(kernel: CovarianceKernel, partition) -> np.ndarray:
    """Covariance matrix of the increments X_{t_i} - X_{t_{i-1}}, t_0 = 0."""
    times = np.asarray(partition, dtype=float)
    # increments = T @ X with T the first-difference matrix
    g = kernel.gram(times)
    k = len(times)
    T = np.eye(k) - np.eye(k, k=-1)
    m = T @ g @ T.T
    return 0.5 * (m + m.T)


def estimate_kappa(kernel: CovarianceKernel, partition, coeff_samples: int = 1000,
                   seed: int = 0) -> float:
    """Nondeterminism constant restricted to one partition.

    Returns the smallest eigenvalue of ``S M S`` where ``M`` is the increment
    covariance and ``S = diag(dt_i^{-H})``; this is the infimum over
    coefficient vectors of ``Var(sum x_i dX_i) / sum x_i^2 dt_i^{2H}``.
    Random coefficient vectors are evaluated as a cross-check only.
    """
    times = np.asarray(partition, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise DomainError("partition must be a nonempty 1-d sequence")
    if times[0] <= 0 or np.any(np.diff(times) <= 0):
        raise DomainError("partition must be strictly increasing and start after 0")
    if coeff_samples < 1:
        raise DomainError("coeff_samples must be >= 1")
    dt = np.diff(np.concatenate([[0.0], times]))
    scale = dt ** -kernel.hurst
    m = increment_gram(kernel, times) * scale[:, None] * scale[None, :]
    eig = np.linalg.eigvalsh(m)
    kappa = float(eig[0])
    if kappa <= 1e-13 * max(float(eig[-1]), 1.0):
        warnings.warn(f"singular increment Gram on partition {times.tolist()}",
                      SingularGramWarning, stacklevel=2)
        return 0.0

    rng = np.random.default_rng(seed)
    x = rng.standard_normal((coeff_samples, len(times)))
    sampled = np.einsum("ij,jk,ik->i", x, m, x) / np.einsum("ij,ij->i", x, x)
    if sampled.min() < kappa * (1 - 1e-9) - 1e-12:
        raise ArithmeticError("sampled ratio fell below the eigenvalue bound")
    return kappa


def uniform_kappa(kernel: CovarianceKernel, k: int, t_max: float = 1.0,
                  partitions: int = 2000, seed: int = 0) -> float:
    """Smallest per-partition kappa over random partitions of size ``k``.

    The scan also includes uniform and geometric partitions. Used as the
    empirical stand-in for the constant that depends only on ``k`` and H.
    """
    rng = np.random.default_rng(seed)
    cands = [np.linspace(t_max / k, t_max, k),
             t_max * np.geomspace(1e-3, 1.0, k) if k > 1 else np.array([t_max])]
    for _ in range(partitions):
        cands.append(np.sort(rng.uniform(0, t_max, k)))
    best = np.inf
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularGramWarning)
        for p in cands:
            if np.any(np.diff(np.concatenate([[0.0], p])) <= 0):
                continue
            best = min(best, estimate_kappa(kernel, p, coeff_samples=1))
    return float(best)


@dataclass
class HypothesisDiagnostics:
    kappa_est: float
    alpha2: float
    phi_envelope: list[tuple[float, float]] = field(default_factory=list)
    beta_table: list[tuple[float, float]] = field(default_factory=list)
    beta_accepted: list[int] = field(default_factory=list)


def estimate_h2(kernel: CovarianceKernel, t_grid, ratio_grid):
    """Increment-variance coefficient and deviation envelope.

    Returns ``(alpha2, envelope)`` where ``alpha2`` is Var/h^{2H} at the
    smallest sampled ratio h/t (averaged over ``t_grid``) and ``envelope``
    is a list of ``(ratio, max_t |Var/h^{2H} - alpha2|)`` sorted by ratio.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    ratios = np.sort(np.asarray(ratio_grid, dtype=float))
    if t_grid.size == 0 or ratios.size == 0:
        raise DomainError("empty grid")
    if np.any(ratios <= 0) or np.any(ratios > 1):
        raise DomainError("ratios h/t must lie in (0, 1]")
    if np.any(t_grid <= 0):
        raise DomainError("t grid must be positive")
    t = t_grid[None, :]
    h = ratios[:, None] * t
    normalized = increment_variance(kernel, t, h) / h ** (2 * kernel.hurst)
    alpha2 = float(np.mean(normalized[0]))
    dev = np.max(np.abs(normalized - alpha2), axis=1)
    return alpha2, [(float(r), float(e)) for r, e in zip(ratios, dev)]


def _h3_admissible(q, gamma):
    d2 = q[:, 1] - q[:, 0]
    d3 = q[:, 2] - q[:, 1]
    d4 = q[:, 3] - q[:, 2]
    r = d2 / d4
    return (r <= 1 / gamma) | (r >= gamma) | (np.maximum(d2, d4) / d3 <= 1 / gamma)


def _h3_correlation(kernel, q):
    t1, t2, t3, t4 = q.T
    cov = kernel(t4, t2) - kernel(t4, t1) - kernel(t3, t2) + kernel(t3, t1)
    v43 = increment_variance(kernel, t3, t4 - t3)
    v21 = increment_variance(kernel, t1, t2 - t1)
    return np.abs(cov) / np.sqrt(v43 * v21)


def estimate_h3(kernel: CovarianceKernel, gamma_grid, config_samples: int = 10_000,
                seed: int = 0, lo: float = 0.1, hi: float = 10.0,
                max_pool: int = 4_000_000):
    """Table of ``(gamma, max normalized |Cov(dX_43, dX_21)|)``.

    Quadruples are drawn uniformly from ``[lo, hi]^4`` and sorted. One pool is
    shared by every gamma and grown until the largest gamma has
    ``config_samples`` admissible configurations (or ``max_pool`` is hit).
    Admissible sets shrink as gamma grows, so the table is nonincreasing.
    Returns ``(table, accepted_counts)``.
    """
    gammas = np.asarray(gamma_grid, dtype=float)
    if np.any(gammas <= 1):
        raise DomainError("gamma values must exceed 1")
    rng = np.random.default_rng(seed)
    pool = np.empty((0, 4))
    gmax = gammas.max()
    batch = max(config_samples, 10_000)
    while len(pool) < max_pool:
        q = np.sort(rng.uniform(lo, hi, size=(batch, 4)), axis=1)
        q = q[np.all(np.diff(q, axis=1) > 0, axis=1)]
        pool = np.concatenate([pool, q])
        if _h3_admissible(pool, gmax).sum() >= config_samples:
            break
        batch = min(2 * batch, max_pool - len(pool)) or 1
    corr = _h3_correlation(kernel, pool)
    table, counts = [], []
    for g in gammas:
        ok = _h3_admissible(pool, g)
        counts.append(int(ok.sum()))
        table.append((float(g), float(corr[ok].max()) if ok.any() else 0.0))
    return table, counts


def check_hypotheses(kernel: CovarianceKernel, partition=None, t_grid=None,
                     ratio_grid=None, gamma_grid=None, config_samples=10_000,
                     seed=0) -> HypothesisDiagnostics:
    """Run the three hypothesis diagnostics with default grids."""
    if partition is None:
        partition = np.linspace(0.25, 2.0, 8)
    if t_grid is None:
        t_grid = np.array([0.5, 1.0, 2.0, 10.0])
    if ratio_grid is None:
        ratio_grid = np.logspace(-4, -1, 7)
    if gamma_grid is None:
        gamma_grid = [2.0, 5.0, 10.0, 30.0, 100.0]
    kappa = estimate_kappa(kernel, partition, seed=seed)
    alpha2, env = estimate_h2(kernel, t_grid, ratio_grid)
    table, counts = estimate_h3(kernel, gamma_grid, config_samples, seed)
    return HypothesisDiagnostics(kappa, alpha2, env, table, counts)


def alpha2_of(kernel: CovarianceKernel) -> float:
    """Increment-variance coefficient as used by the limit constant.

    Exact (=1) for fBm; otherwise the estimate at ratio 1e-6.
    """
    if kernel.family is Family.FBM:
        return 1.0
    a2, _ = estimate_h2(kernel, [1.0], [1e-6])
    return a2
