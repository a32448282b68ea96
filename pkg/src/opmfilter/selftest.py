"""Fast numerical self-checks, runnable without the test suite installed."""

from __future__ import annotations

import itertools

import numpy as np

from .filters import GaussianBelief, gaussian_possibility_step, kalman_step
from .harness import derive_run_seed, make_run_result, rmse_total
from .possibility import GaussianKernel
from .sampling import (
    _x_star_residual,
    global_entropy_inverse_cdf,
    pmf_global_entropy,
    pmf_global_entropy_direct,
    pmf_local_entropy,
    solve_x_star,
)


def _x_star():
    t = solve_x_star()
    assert abs(_x_star_residual(t.x_star)) < 1e-12
    u = np.linspace(1e-6, 1 - 1e-6, 20001)
    assert np.all(np.diff(global_entropy_inverse_cdf(u)) >= 0)


def _pmf_bounds():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 7))
        w = rng.random(n)
        w /= w.max()
        g = pmf_global_entropy(w).probs
        assert abs(g.sum() - 1) < 1e-12
        for r in range(1, n + 1):
            for sub in itertools.combinations(range(n), r):
                sub = list(sub)
                assert g[sub].sum() <= w[sub].max() + 1e-9
        assert np.allclose(g, pmf_global_entropy_direct(w).probs, atol=1e-12)
        if w.sum() >= 1:
            loc = pmf_local_entropy(w).probs
            assert np.all(loc <= w + 1e-9) and abs(loc.sum() - 1) < 1e-12


def _kalman():
    rng = np.random.default_rng(2)
    b1 = b2 = GaussianBelief(np.zeros(2), np.eye(2))
    for _ in range(20):
        F = np.eye(2) + 0.1 * rng.standard_normal((2, 2))
        A = rng.standard_normal((2, 2))
        Q = A @ A.T + 0.1 * np.eye(2)
        H = rng.standard_normal((1, 2))
        R = np.array([[0.5]])
        y = rng.standard_normal(1)
        b1 = kalman_step(b1, F, Q, H, R, y)
        b2 = gaussian_possibility_step(b2, F, Q, H, R, y)
    assert np.allclose(b1.mean, b2.mean, rtol=1e-8) and np.allclose(b1.cov, b2.cov, rtol=1e-8)


def _kernel_consistency():
    rng = np.random.default_rng(3)
    k = GaussianKernel(np.eye(2), 0.3 * np.eye(2))
    x, y = rng.standard_normal((30, 2)), rng.standard_normal((20, 2))
    lw = np.log(rng.random(30))
    brute = np.array([np.max(lw + k.log_eval(t, x)) for t in y])
    assert np.allclose(k.max_plus(y, x, lw), brute, atol=1e-10)
    dens = np.array([np.log(np.sum(np.exp(lw + k.log_density(t, x)))) for t in y])
    assert np.allclose(k.log_sum(y, x, lw), dens, atol=1e-10)


def _seeds_and_rmse():
    assert derive_run_seed(7, "1", 0, 256, 0) == derive_run_seed(7, "1", 0, 256, 0)
    assert derive_run_seed(7, "1", 0, 256, 0) != derive_run_seed(7, "1", 0, 256, 1)
    r = make_run_result([[3.0, 4.0]], [[0.0, 0.0]])
    assert abs(rmse_total([r]).total_rmse - 5.0) < 1e-12


CHECKS = {
    "x* root and inverse CDF": _x_star,
    "discrete entropy PMF bounds": _pmf_bounds,
    "Kalman and Gaussian possibility recursions": _kalman,
    "pairwise kernel reductions": _kernel_consistency,
    "seeding and RMSE arithmetic": _seeds_and_rmse,
}


def run_selftest(verbose: bool = False) -> bool:
    ok = True
    for name, check in CHECKS.items():
        try:
            check()
            status = "PASS"
        except AssertionError:
            status, ok = "FAIL", False
        if verbose:
            print(f"{status}  {name}")
    return ok
