"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line (printed in the terminal summary) and then
asserts the same verdict, so a failing criterion fails here.
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from gclt.analytics import (Method, Rectangle, det_lower_bound_check, lambda_moment,
                            lambda_power_moment, moment_growth_bound)
from gclt.functionals import gaussian_density, gaussian_diff, holder_check
from gclt.harness import ExperimentConfig, ks_report, run_clt_experiment, run_tightness_scan
from gclt.harness.experiments import _pair
from gclt.kernels import bifbm, check_self_similarity, fbm, subfbm, uniform_kappa
from gclt.localtime import expected_local_time, intersection_local_time
from gclt.sampling import TimeGrid, sample_ensemble

STANDARD = ExperimentConfig(n_ladder=(4.0, 16.0, 64.0), n_steps=128, n_paths=20_000, seed=0,
                            max_order=4)
KERNELS = [fbm(0.3), fbm(0.75), bifbm(0.6, 0.8), bifbm(0.5, 0.8), subfbm(0.6), subfbm(0.75)]
UNIT = [Rectangle(0.0, 1.0, 0.0, 1.0)]


def verdict(number: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{number:02d}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, detail


def _se(x):
    return x.std(ddof=1) / math.sqrt(x.size)


@pytest.fixture(scope="module")
def clt_report():
    return run_clt_experiment(STANDARD)


def test_kernel_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    s, t = rng.uniform(0, 10, (2, 1000))
    gap = float(np.max(np.abs(bifbm(0.6, 1.0)(s, t) - fbm(0.6)(s, t))))
    grid = np.linspace(0.1, 3.0, 25)
    ss = max(check_self_similarity(k, c, grid) for k in KERNELS for c in (0.5, 2.0, 10.0))
    elapsed = time.perf_counter() - start
    ok = gap <= 1e-12 and ss <= 1e-10 and elapsed < 1.0
    verdict(1, "kernel identities", ok,
            f"bifbm(K0=1) gap={gap:.1e}, self-similarity={ss:.1e}, {elapsed:.2f}s")


def test_sampler_covariance():
    start = time.perf_counter()
    k, g = fbm(0.75), TimeGrid(1.0, 32)
    ens = sample_ensemble(k, g, 2, 50_000, seed=2024)
    x, y = ens.data[:, 0, :], ens.data[:, 1, :]
    iu = np.triu_indices(32)
    auto = x[:, :, None] * x[:, None, :]
    z_auto = ((auto.mean(0) - k.gram(g.times)) / (auto.std(0, ddof=1) / math.sqrt(50_000)))[iu]
    cross = x[:, :, None] * y[:, None, :]
    z_cross = cross.mean(0) / (cross.std(0, ddof=1) / math.sqrt(50_000))
    worst = max(np.max(np.abs(z_auto)), np.max(np.abs(z_cross)))
    elapsed = time.perf_counter() - start
    verdict(2, "sampler covariance", worst <= 4.0 and elapsed < 30, f"max |z| = {worst:.2f} "
            f"over {z_auto.size + z_cross.size} entries, {elapsed:.1f}s")


def test_local_time_mean():
    start = time.perf_counter()
    k = fbm(0.75)
    pair = _pair(ExperimentConfig(n_steps=128, seed=7), 10_000, 0)
    vals = intersection_local_time(pair, 1.0, 1.0, 0.1)
    exact = expected_local_time(k, 1.0, 1.0, 0.1)
    z = (vals.mean() - exact) / _se(vals)
    elapsed = time.perf_counter() - start
    verdict(3, "smoothed local time mean", abs(z) <= 4 and elapsed < 60,
            f"MC {vals.mean():.5f} vs quadrature {exact:.5f} (z={z:.2f}), {elapsed:.1f}s")


def test_second_moment_of_limit():
    start = time.perf_counter()
    k = fbm(0.75)
    quad = lambda_moment(k, UNIT, [2])
    mc = lambda_moment(k, UNIT, [2], method=Method.MC, samples=400_000, seed=3)
    mean_lt = expected_local_time(k, 1.0, 1.0, 0.0)
    elapsed = time.perf_counter() - start
    ok = (abs(quad - mc) <= 0.01 * quad and abs(quad - mean_lt) <= 1e-6 * mean_lt
          and elapsed < 30)
    verdict(4, "second moment of the limit", ok,
            f"quadrature {quad:.7f}, MC {mc:.5f}, E[I] {mean_lt:.7f}, {elapsed:.1f}s")


def test_odd_moments_vanish(clt_report):
    n = max(STANDARD.n_ladder)
    rows = [clt_report.find(f"moment_{m}", n) for m in (1, 3)]
    ok = all(abs(r.zscore) <= 4 for r in rows)
    verdict(5, "odd moments at n=64", ok,
            ", ".join(f"E[F^{r.order}]={r.empirical:.4f} (z={r.zscore:.1f})" for r in rows))


def test_even_moments(clt_report):
    n = max(STANDARD.n_ladder)
    rows = [clt_report.find(f"moment_{m}", n) for m in (2, 4)]
    mono = clt_report.find("ladder_monotone_moment_2")
    ok = all(r.verdict == "pass" for r in rows) and mono.verdict == "pass"
    verdict(6, "even moments at n=64", ok,
            ", ".join(f"E[F^{r.order}]={r.empirical:.4f}+-{r.se:.4f} vs {r.theoretical:.4f}"
                      for r in rows) + f", ladder monotone={mono.verdict}")


def test_ks_against_mixture():
    start = time.perf_counter()
    cfg = ExperimentConfig(n_ladder=(64.0,), n_steps=128, ks_paths=5000)
    rep = ks_report(cfg, range(10), d_multiplier=4.0)
    elapsed = time.perf_counter() - start
    accept, reject = rep.find("matched_accept_count"), rep.find("wrong_D_reject_count")
    ok = accept.verdict == "pass" and reject.verdict == "pass" and elapsed < 600
    verdict(7, "KS against the Gaussian mixture", ok,
            f"matched accepted {accept.empirical:.0f}/10, 4D rejected {reject.empirical:.0f}/10,"
            f" {elapsed:.0f}s")


def test_tightness():
    cfg = ExperimentConfig(n_ladder=(64.0,), n_steps=128, n_paths=4000, seed=1)
    res = run_tightness_scan(cfg)
    ok = (res.slope >= res.bound_exponent - 2 * res.slope_se
          and abs(res.scaling_ratio - 4.0) <= 1e-10)
    verdict(8, "tightness", ok, f"slope {res.slope:.3f}+-{res.slope_se:.3f} vs bound "
            f"{res.bound_exponent:.3f}, f->2f ratio {res.scaling_ratio:.12f}")


@pytest.mark.parametrize("f,H", [(gaussian_diff(1, 1, 2), 0.75), (gaussian_diff(1, 0.3, 0.5), 0.75),
                                 (gaussian_diff(2, 0.5, 1.5), 0.6),
                                 (gaussian_density(1, 1.0), 0.75)],
                         ids=lambda v: getattr(v, "name", None) and f"{v.name}/d{v.dim}")
def test_holder_bound(f, H):
    worst = holder_check(f, H, trials=10_000, seed=11)
    verdict(9, f"Hoelder bound {f.name}/d{f.dim}", worst <= 1e-9,
            f"largest excess over 10^4 triples {worst:.2e}")


def test_growth_and_determinant_bounds():
    k = fbm(0.75)
    kappas = {j: uniform_kappa(k, j, partitions=300) for j in (1, 2, 3)}
    kappa = min(kappas.values())
    growth = [(n, lambda_power_moment(k, n), moment_growth_bound(n, 1, 1, 0.75, 1, kappa))
              for n in (2, 4, 6)]
    rng = np.random.default_rng(5)
    margins = []
    for _ in range(1000):
        j = int(rng.integers(1, 4))
        u, v = np.sort(rng.uniform(0, 1, (2, j)), axis=1)
        margins.append(det_lower_bound_check(k, u, v, kappas[j]))
    ok = all(m <= b for _, m, b in growth) and min(margins) >= 0
    verdict(10, "moment growth and determinant bounds", ok,
            ", ".join(f"n={n}: {m:.3g}<={b:.3g}" for n, m, b in growth)
            + f", min det margin {min(margins):.3g}")
