import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from gclt.analytics import (ConstantDivergence, Method, Rectangle, check_disjoint,
                            det_lower_bound_check, gaussian_moment_prefactor, lambda_moment,
                            lambda_moment_detail, lambda_power_moment, limit_constant,
                            moment_growth_bound, prefactor, spectral_integral)
from gclt.functionals import gaussian_density, gaussian_diff
from gclt.kernels import DomainError, bifbm, fbm, subfbm, uniform_kappa
from gclt.localtime import expected_local_time

UNIT = [Rectangle(0.0, 1.0, 0.0, 1.0)]


def closed_form_spectral(f, H, d, N=2):
    """Analytic continuation of the Gaussian moment integral, valid for zero-integral mixtures."""
    p = d - 1 - N / H
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    total = 0.0
    for ci, si in zip(f.coeffs, f.sigmas):
        for cj, sj in zip(f.coeffs, f.sigmas):
            a = (si * si + sj * sj) / 2
            total += ci * cj * math.gamma((p + 1) / 2) / (2 * a ** ((p + 1) / 2))
    return area * (2 * math.pi) ** -d * total


def test_gamma_implementation():
    assert special.gamma(2.0) == 1.0
    assert special.gamma(1.5) == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-14)


@pytest.mark.parametrize("H,a2,expect", [(0.5, 2.0, 2.0), (0.5, 1.0, 4.0),
                                         (0.75, 1.0, 2 * 2 ** (2 / 3) * math.gamma(5 / 3))])
def test_prefactor(H, a2, expect):
    assert prefactor(H, a2) == pytest.approx(expect, rel=1e-12)


def test_prefactor_domain():
    with pytest.raises(DomainError):
        prefactor(1.2, 1.0)
    with pytest.raises(DomainError):
        prefactor(0.5, 0.0)


@pytest.mark.parametrize("f,H", [(gaussian_diff(1, 1, 2), 0.75), (gaussian_diff(1, 1, 2), 0.68),
                                 (gaussian_diff(1, 0.3, 0.9), 0.9),
                                 (gaussian_diff(2, 0.5, 1.5), 0.6),
                                 (gaussian_diff(3, 1, 1.2), 0.45)])
def test_spectral_integral_closed_form(f, H):
    val, err = spectral_integral(f, H, f.dim)
    assert val == pytest.approx(closed_form_spectral(f, H, f.dim), rel=1e-9)
    assert err < 1e-8 * val


def test_spectral_integral_importance_sampling():
    f, H = gaussian_diff(1, 1, 2), 0.75
    rng = np.random.default_rng(0)
    # Gamma proposal: behaves like rho near 0, where the integrand is ~ rho^{4 - 2/H}
    shape, scale = 2.0, 0.3
    rho = rng.gamma(shape, scale, 4_000_000)
    w = f.fourier_radial(rho) ** 2 * rho ** (-2 / H) / stats.gamma.pdf(rho, shape, scale=scale)
    est = 2 * w.mean() / (2 * math.pi)
    se = 2 * w.std() / math.sqrt(w.size) / (2 * math.pi)
    val, _ = spectral_integral(f, H, 1)
    assert abs(est - val) <= max(4 * se, 1e-3 * val)
    assert 4 * se < 1e-3 * val


def test_spectral_integral_quadratic_in_f():
    f, H = gaussian_diff(1, 1, 2), 0.75
    base = spectral_integral(f, H, 1)[0]
    assert spectral_integral(f.scaled(3.0), H, 1)[0] == pytest.approx(9 * base, rel=1e-12)


def test_spectral_integral_threshold():
    f = gaussian_diff(1, 1, 2)
    near = spectral_integral(f, 0.67, 1)[0]
    assert np.isfinite(near) and near > spectral_integral(f, 0.75, 1)[0]
    with pytest.raises(ConstantDivergence):
        spectral_integral(f, 0.66, 1)
    # for symmetric mixtures the integral is still finite a bit below the class threshold
    assert spectral_integral(f, 0.6, 1, strict=False)[0] == pytest.approx(
        closed_form_spectral(f, 0.6, 1), rel=1e-9)
    with pytest.raises(ConstantDivergence):
        spectral_integral(f, 0.3, 1, strict=False)


def test_spectral_integral_non_member_diverges():
    with pytest.raises(ConstantDivergence):
        spectral_integral(gaussian_density(1, 1.0), 0.75, 1, strict=False)


def test_limit_constant_structure():
    f, H = gaussian_diff(1, 1, 2), 0.75
    c2 = limit_constant(f, H, 1, 1.0)
    assert c2.value == pytest.approx(c2.prefactor**2 * spectral_integral(f, H, 1)[0], rel=1e-15)
    c1 = limit_constant(f, H, 1, 1.0, N=1)
    assert c1.N == 1 and c1.value == pytest.approx(
        c1.prefactor * spectral_integral(f, H, 1, 1)[0], rel=1e-15)
    assert c1.prefactor**2 * c2.spectral_integral == pytest.approx(c2.value, rel=1e-15)


@pytest.mark.parametrize("N", [1, 2])
def test_limit_constant_alpha2_scaling(N):
    f, H = gaussian_diff(1, 1, 2), 0.75
    ratio = limit_constant(f, H, 1, 2.0, N).value / limit_constant(f, H, 1, 1.0, N).value
    assert ratio == pytest.approx(0.5 ** (N / (2 * H)), rel=1e-13)


def test_standard_constant_value():
    c = limit_constant(gaussian_diff(1, 1, 2), 0.75, 1, 1.0)
    assert c.value == pytest.approx(1.0222918, rel=1e-6)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_gaussian_moment_prefactor(d):
    for m in (2, 4, 6, 8):
        expect = math.factorial(m) / (2 ** (m / 2) * (2 * math.pi) ** (m * d / 4)
                                      * math.factorial(m // 2))
        assert gaussian_moment_prefactor(m, d) == pytest.approx(expect, rel=1e-14)
    # conditionally Gaussian with variance I: E[L^2] = E[I], E[L^4] = 3 E[I^2]
    pref = gaussian_moment_prefactor
    assert pref(2, d) == pytest.approx((2 * math.pi) ** (-d / 2), rel=1e-15)
    assert pref(4, d) == pytest.approx(3 * (2 * math.pi) ** -d, rel=1e-15)


def test_second_moment_direct_quadrature():
    H = 0.75
    direct = integrate.dblquad(lambda t, w: (w ** (2 * H) + t ** (2 * H)) ** -0.5, 0, 1, 0, 1,
                               epsabs=1e-12, epsrel=1e-10)[0] / math.sqrt(2 * math.pi)
    assert lambda_moment(fbm(H), UNIT, [2]) == pytest.approx(direct, rel=1e-8)


@pytest.mark.parametrize("k", [fbm(0.75), subfbm(0.6), bifbm(0.6, 0.8)], ids=str)
def test_second_moment_is_mean_local_time(k):
    val = lambda_moment(k, [Rectangle(0, 1, 0, 2)], [2])
    assert val == pytest.approx(expected_local_time(k, 1.0, 2.0, 0.0), rel=1e-6)


def test_odd_exponent_gives_zero():
    rects = [Rectangle(0, .5, 0, .5), Rectangle(.5, 1, .5, 1)]
    assert lambda_moment(fbm(0.75), rects, [1, 2]) == 0.0
    assert lambda_moment(fbm(0.75), UNIT, [3]) == 0.0


def test_fourth_moment_quadrature_vs_mc():
    k = fbm(0.75)
    quad = lambda_moment(k, UNIT, [4])
    mc, se = lambda_moment_detail(k, UNIT, [4], method=Method.MC, samples=400_000, seed=1)
    assert abs(quad - mc) <= 0.01 * quad
    assert se < 0.005 * quad


def test_mixed_moment_quadrature_vs_mc():
    k = fbm(0.75)
    rects = [Rectangle(0, .5, 0, .5), Rectangle(.5, 1, .5, 1)]
    quad = lambda_moment(k, rects, [2, 2])
    mc = lambda_moment(k, rects, [2, 2], method=Method.MC, samples=400_000, seed=2)
    assert quad == pytest.approx(mc, rel=0.01)
    assert quad == pytest.approx(0.028547, rel=2e-3)


@pytest.mark.parametrize("m", [2, 4])
@pytest.mark.parametrize("c", [0.5, 3.0])
def test_moment_self_similarity(m, c):
    k, H = fbm(0.75), 0.75
    base = lambda_moment(k, [Rectangle(0, 1, 0, 2)], [m])
    scaled = lambda_moment(k, [Rectangle(0, c, 0, 2 * c)], [m])
    assert scaled == pytest.approx(base * c ** (m * (1 - H / 2)), rel=1e-8)


def test_quadrature_order_limit():
    with pytest.raises(DomainError):
        lambda_moment(fbm(0.75), UNIT, [10])
    assert lambda_power_moment(fbm(0.75), 10, samples=20_000) > 0


def test_rectangles():
    with pytest.raises(DomainError):
        Rectangle(1, 0, 0, 1)
    with pytest.raises(DomainError):
        check_disjoint([Rectangle(0, 1, 0, 1), Rectangle(0.5, 2, 0.5, 2)])
    check_disjoint([Rectangle(0, 1, 0, 1), Rectangle(1, 2, 0, 1)])


def test_det_bound_single_point():
    k = subfbm(0.6)
    kappa = min(1.0, 2 - 2 ** (2 * 0.6 - 1))
    rng = np.random.default_rng(0)
    for u, v in rng.uniform(0.01, 3, (200, 2)):
        assert det_lower_bound_check(k, [u], [v], kappa) >= 0


def test_det_bound_brownian_pairs():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        u, v = np.sort(rng.uniform(0, 1, (2, 2)), axis=1)
        assert det_lower_bound_check(fbm(0.5), u, v, 1.0) >= 0


def test_det_bound_sign_scale_invariant():
    k, rng = fbm(0.75), np.random.default_rng(2)
    kappa = uniform_kappa(k, 3, partitions=300)
    for _ in range(50):
        u, v = np.sort(rng.uniform(0, 1, (2, 3)), axis=1)
        a = det_lower_bound_check(k, u, v, kappa)
        b = det_lower_bound_check(k, 7 * u, 7 * v, kappa)
        assert b == pytest.approx(a * 7 ** (-3 * 0.75), rel=1e-6, abs=1e-9)
        assert a >= 0


def test_growth_bound_dominates_moments():
    k, H = fbm(0.75), 0.75
    kappa = min(uniform_kappa(k, j, partitions=300) for j in (1, 2, 3))
    for n in (2, 4, 6):
        assert lambda_power_moment(k, n) <= moment_growth_bound(n, 1, 1, H, 1, kappa)


def test_growth_bound_time_scaling():
    b1 = moment_growth_bound(2, 1, 1, 0.75, 1, 0.5)
    assert moment_growth_bound(2, 2, 1, 0.75, 1, 0.5) / b1 == pytest.approx(2 ** 0.625,
                                                                             rel=1e-14)


def test_growth_bound_factorial_shape():
    seq = [moment_growth_bound(n, 1, 1, 0.75, 1, 0.5) ** (1 / n) / n for n in (2, 4, 6, 8)]
    assert max(seq) < 10 * min(seq)
    with pytest.raises(DomainError):
        moment_growth_bound(3, 1, 1, 0.75, 1, 0.5)
