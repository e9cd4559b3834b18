"""Gaussian-mollified local time of Z(u, v) = X1_u - X2_v and the
first-order law for positive integrable f.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .functionals import (TestFunction, functional_on_rectangles, gaussian_density,
                          grid_double_integrals)
from .kernels import CovarianceKernel, DomainError

DEFAULT_EPSILONS = (0.2, 0.1, 0.05)


@dataclass
class LocalTimeEstimate:
    epsilon: float
    values: np.ndarray
    t1: float
    t2: float
    x: np.ndarray = field(default_factory=lambda: np.zeros(1))


def mollifier_profile(epsilon: float, d: int):
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    return gaussian_density(d, epsilon).profile


def local_time_density(pair, x, rect, epsilon: float) -> np.ndarray:
    """Per-path L_eps(x, E) for ``E = (a1, b1, a2, b2)`` on the pair's grids."""
    d = pair[0].dim
    x = np.broadcast_to(np.asarray(x, dtype=float), (d,))
    shift = None if not np.any(x) else x
    out = grid_double_integrals(pair, [mollifier_profile(epsilon, d)], [tuple(rect)],
                                shift=shift)
    return out[0, 0]


def intersection_local_time(pair, t1: float, t2: float, epsilon: float) -> np.ndarray:
    """Per-path I_eps(t1, t2) = trapezoid sum of p_eps(X1_u - X2_v) on [0,t1]x[0,t2]."""
    return local_time_density(pair, 0.0, (0.0, t1, 0.0, t2), epsilon)


def local_time_ladder(pair, t1, t2, epsilons=DEFAULT_EPSILONS) -> np.ndarray:
    """I_eps for each epsilon; shape ``(len(epsilons), n_paths)``."""
    d = pair[0].dim
    funcs = [mollifier_profile(e, d) for e in epsilons]
    return grid_double_integrals(pair, funcs, [(0.0, t1, 0.0, t2)])[:, 0, :]


def steps_for_epsilon(H: float, epsilon: float, t_max: float = 1.0) -> int:
    """Smallest uniform grid with spacing^H <= epsilon/4 on [0, t_max]."""
    spacing = (epsilon / 4) ** (1 / H)
    return int(np.ceil(t_max / spacing))


def expected_local_time(kernel: CovarianceKernel, t1: float, t2: float, epsilon: float,
                        d: int = 1, rect=None) -> float:
    """E[I_eps(t1,t2)] = int int (2 pi (R(u,u)+R(v,v)+eps^2))^{-d/2} du dv.

    Adaptive 2-D quadrature; ``epsilon = 0`` gives E[I] (the corner
    singularity is integrable for Hd < 2).
    """
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    a1, b1, a2, b2 = rect if rect is not None else (0.0, t1, 0.0, t2)
    e2 = epsilon * epsilon

    def inner(u):
        vu = float(kernel.variance(u))
        g = lambda v: (2 * np.pi * (vu + float(kernel.variance(v)) + e2)) ** (-d / 2)
        return integrate.quad(g, a2, b2, epsabs=0, epsrel=1e-12, limit=200)[0]

    return integrate.quad(inner, a1, b1, epsabs=0, epsrel=1e-11, limit=200)[0]


def expected_trapezoid_moments(kernel: CovarianceKernel, grid1, grid2, epsilon: float,
                               d: int = 1):
    """Exact mean and second moment of the trapezoid estimator I_eps on the grids.

    Uses E p_eps(Z1) p_eps(Z2) = (2 pi)^{-d} det(S + eps^2 I)^{-d/2} with S
    the 2x2 covariance of one component of (Z1, Z2).  Cost is O(N^4); keep
    grids small.
    """
    t1 = np.concatenate([[0.0], grid1.times])
    t2 = np.concatenate([[0.0], grid2.times])
    w1 = np.full(len(t1), grid1.dt); w1[[0, -1]] /= 2
    w2 = np.full(len(t2), grid2.dt); w2[[0, -1]] /= 2
    g1 = kernel.gram(t1)
    g2 = kernel.gram(t2)
    e2 = epsilon * epsilon
    var = np.diag(g1)[:, None] + np.diag(g2)[None, :] + e2
    mean = float(w1 @ ((2 * np.pi * var) ** (-d / 2)) @ w2)
    W = np.outer(w1, w2).ravel()
    V = var.ravel()
    I, J = np.meshgrid(np.arange(len(t1)), np.arange(len(t2)), indexing="ij")
    I, J = I.ravel(), J.ravel()
    second = 0.0
    for k in range(len(W)):
        cov = g1[I[k], I] + g2[J[k], J]
        det = V[k] * V - cov * cov
        second += W[k] * np.dot(W, (2 * np.pi) ** -d * det ** (-d / 2))
    return mean, float(second)


@dataclass
class FirstOrderRow:
    n: float
    mean_diff: float
    sd_diff: float
    mean_abs_diff: float


def first_order_check(pair, f: TestFunction, H: float, d: int, n_ladder, epsilon: float,
                      t1: float | None = None, t2: float | None = None):
    """Pathwise comparison of n^{Hd} int int f(n^H Z) with I_eps * int f.

    Both sides are evaluated on the same paths (RESCALED grids on
    [0,t1]x[0,t2]).  Returns a list of :class:`FirstOrderRow`.
    """
    if H * d >= 2:
        raise DomainError(f"local time needs Hd < 2 (H={H}, d={d})")
    if abs(f.integral - 1.0) > 1e-6:
        raise DomainError(f"first-order check needs int f = 1, got {f.integral}")
    e1, e2 = pair
    t1 = e1.grid.t_max if t1 is None else t1
    t2 = e2.grid.t_max if t2 is None else t2
    ref = intersection_local_time(pair, t1, t2, epsilon) * f.integral
    # F_n with first-order normalization n^{Hd-2} = CLT normalization * n^{(Hd-2)/2}
    clt = functional_on_rectangles(pair, f, H, n_ladder, [(0.0, t1, 0.0, t2)])[:, 0, :]
    rows = []
    for n, vals in zip(n_ladder, clt):
        diff = vals * n ** ((H * d - 2) / 2) - ref
        rows.append(FirstOrderRow(float(n), float(diff.mean()), float(diff.std(ddof=1)),
                                  float(np.abs(diff).mean())))
    return rows


def occupation_identity(pair, phi_sigma: float, rect, epsilon: float, x_grid):
    """Both sides of int phi(x) L_eps(x,E) dx = int_E (phi * p_eps)(Z) (d = 1).

    ``phi`` is the centered Gaussian density with width ``phi_sigma``.
    Returns ``(lhs, rhs)`` per path; lhs by trapezoid over ``x_grid``.
    """
    if pair[0].dim != 1:
        raise DomainError("occupation identity check is implemented for d = 1")
    x_grid = np.asarray(x_grid, dtype=float)
    phi = gaussian_density(1, phi_sigma)
    lt = np.stack([local_time_density(pair, x, rect, epsilon) for x in x_grid])
    lhs = np.trapezoid(phi(x_grid)[:, None] * lt, x_grid, axis=0)
    smooth = gaussian_density(1, float(np.hypot(phi_sigma, epsilon)))
    rhs = grid_double_integrals(pair, [smooth.profile], [tuple(rect)])[0, 0]
    return lhs, rhs

