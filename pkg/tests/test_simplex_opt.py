import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basket_wing import _backend
from basket_wing.errors import DomainError, MatrixError
from basket_wing.simplex_opt import inner_max_weights, min_quadratic_simplex, saddle_cstar
from basket_wing.validation import brute_force_cstar, saddle_objective


def two_cov(s1, s2, rho):
    return np.array([[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]])


def random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T / n + 0.05 * np.eye(n)


def test_identity_gives_uniform_weights():
    sol = min_quadratic_simplex(np.eye(3))
    assert np.allclose(sol.w_bar, 1 / 3, atol=1e-15)
    assert sol.value == pytest.approx(1 / 3, rel=1e-15)
    assert sol.n_bar == 3


def test_two_asset_independent():
    sol = min_quadratic_simplex(two_cov(0.3, 0.2, 0.0))
    assert sol.w_bar[0] == pytest.approx(0.04 / 0.13, abs=1e-12)
    assert sol.value == pytest.approx(0.0036 / 0.13, abs=1e-12)
    assert sol.value == pytest.approx(0.0276923, abs=1e-7)


def test_two_asset_above_regime_collapses_to_smaller_vol():
    sol = min_quadratic_simplex(two_cov(0.3, 0.2, 0.8))
    assert np.array_equal(sol.w_bar, [0.0, 1.0])
    assert sol.value == pytest.approx(0.04, rel=1e-14)
    assert sol.support == (1,)


def test_row_sums_are_reciprocal_value():
    sol = min_quadratic_simplex(two_cov(0.3, 0.2, 0.3))
    assert sol.A_row_sums.sum() == pytest.approx(1.0 / sol.value, rel=1e-13)


@pytest.mark.parametrize(
    "cov",
    [np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[1.0, 2.0], [2.0, 1.0]]), np.diag([1.0, 1e-13])],
)
def test_invalid_covariances_rejected(cov):
    with pytest.raises(MatrixError):
        min_quadratic_simplex(cov)


def test_kkt_certificate_on_random_instances():
    rng = np.random.default_rng(11)
    worst = math.inf
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        cov = random_spd(rng, n)
        sol = min_quadratic_simplex(cov)
        w = sol.w_bar
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(w >= 0)
        assert set(np.flatnonzero(w > 0)) == set(sol.support)
        g = cov @ w
        assert np.allclose(g[list(sol.support)], sol.value, rtol=1e-9, atol=1e-12)
        worst = min(worst, sol.kkt_slack(cov))
    assert worst >= -1e-10


def _grid_min(cov, step):
    if cov.shape[0] == 2:
        w1 = np.arange(0.0, 1.0 + step / 2, step)
        W = np.stack([w1, 1 - w1], axis=1)
    else:
        a = np.arange(0.0, 1.0 + step / 2, step)
        w1, w2 = np.meshgrid(a, a, indexing="ij")
        keep = w1 + w2 <= 1 + 1e-12
        W = np.stack([w1[keep], w2[keep], np.clip(1 - w1[keep] - w2[keep], 0, None)], axis=1)
    vals = np.einsum("ij,jk,ik->i", W, cov, W)
    return W[np.argmin(vals)], float(vals.min())


def _refined_grid_min(cov):
    """Exhaustive grid at step 1e-3, then zoomed grids down to step 1e-6."""
    n = cov.shape[0]
    w, best = _grid_min(cov, 1e-3)
    rad = 2e-3
    for _ in range(3):
        step = rad / 100
        a = np.arange(-rad, rad + step / 2, step)
        if n == 2:
            w1 = np.clip(w[0] + a, 0, 1)
            W = np.stack([w1, 1 - w1], axis=1)
        else:
            d1, d2 = np.meshgrid(a, a, indexing="ij")
            w1, w2 = np.clip(w[0] + d1.ravel(), 0, 1), np.clip(w[1] + d2.ravel(), 0, 1)
            keep = w1 + w2 <= 1
            W = np.stack([w1[keep], w2[keep], 1 - w1[keep] - w2[keep]], axis=1)
        vals = np.einsum("ij,jk,ik->i", W, cov, W)
        w, best = W[np.argmin(vals)], min(best, float(vals.min()))
        rad /= 10
    return best


@pytest.mark.parametrize("n", [2, 3])
def test_brute_force_equivalence(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(5):
        cov = random_spd(rng, n)
        sol = min_quadratic_simplex(cov)
        grid = _refined_grid_min(cov)
        assert sol.value <= grid + 1e-12
        assert grid - sol.value < 1e-8


def test_repeated_solves_are_bitwise_identical():
    cov = random_spd(np.random.default_rng(5), 6)
    a, b = min_quadratic_simplex(cov), min_quadratic_simplex(cov)
    assert a.w_bar.tobytes() == b.w_bar.tobytes()


@pytest.mark.skipif("cython" not in _backend.BACKENDS, reason="compiled kernel not built")
def test_backends_agree():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(1, 12))
        cov = random_spd(rng, n)
        with _backend.using("python"):
            a = min_quadratic_simplex(cov)
        with _backend.using("cython"):
            b = min_quadratic_simplex(cov)
        assert a.support == b.support
        assert np.allclose(a.w_bar, b.w_bar, atol=1e-13)


def test_backend_switch_rejects_unknown_name():
    with pytest.raises(ValueError):
        _backend.use("fortran")


def test_pure_python_environment_switch():
    env = dict(os.environ, BASKET_WING_PURE_PYTHON="1")
    code = "from basket_wing import _backend; print(_backend.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_large_dimension_uses_projected_warm_start():
    cov = random_spd(np.random.default_rng(8), 40)
    sol = min_quadratic_simplex(cov)
    assert sol.kkt_slack(cov) >= -1e-10


def test_saddle_single_asset_zero_drift():
    sp = saddle_cstar([[1.0]], [0.0], 1.0)
    assert sp.c_star == pytest.approx(math.sqrt(2.0), rel=1e-12)
    assert sp.t_bar == pytest.approx(1 / math.sqrt(2.0), rel=1e-8)


def test_saddle_single_asset_negative_drift():
    s2, mu, theta = 0.16, -0.5, 1.0
    sp = saddle_cstar([[s2]], [mu], theta)
    closed = (math.sqrt(2 * theta * s2 + mu * mu) + mu) / s2
    assert sp.c_star == pytest.approx(closed, rel=1e-12)
    # direct minimisation of theta t + (1 + mu t)^2 / (2 s2 t)
    t = np.linspace(0.01, 1.99, 1_000_001)
    assert sp.c_star == pytest.approx(float(np.min(theta * t + (1 + mu * t) ** 2 / (2 * s2 * t))), abs=1e-9)
    assert sp.c_star == pytest.approx(1.59365, abs=1e-5)


def test_saddle_zero_drift_symmetric_formula():
    rng = np.random.default_rng(21)
    for n in (2, 3, 5):
        cov = random_spd(rng, n)
        sp = saddle_cstar(cov, np.zeros(n), 1.5)
        assert sp.c_star == pytest.approx(math.sqrt(3.0 / min_quadratic_simplex(cov).value), rel=1e-10)


def test_saddle_against_brute_force_grid():
    cov = two_cov(0.3, 0.2, 0.5)
    mu = np.array([0.1, -0.1])
    sp = saddle_cstar(cov, mu, 1.0)
    assert abs(sp.c_star - brute_force_cstar(cov, mu, 1.0)) < 1e-3


def test_saddle_invariants():
    rng = np.random.default_rng(4)
    for _ in range(30):
        n = int(rng.integers(1, 5))
        cov = random_spd(rng, n)
        mu = rng.standard_normal(n)
        sp = saddle_cstar(cov, mu, 0.7)
        assert 1 + sp.t_bar * float(mu @ sp.w_bar) > 0
        assert sp.w_bar.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(sp.u_bar >= 0)
        ts = sp.t_bar * np.linspace(0.8, 1.2, 41)
        f = np.array([inner_max_weights(cov, mu, 0.7, t)[0] for t in ts])
        assert np.all(f[:-2] - 2 * f[1:-1] + f[2:] >= -1e-9)
        assert f.min() >= sp.c_star - 1e-9


def test_saddle_nondecreasing_in_theta():
    cov = two_cov(0.3, 0.2, 0.1)
    mu = np.array([0.2, -0.3])
    c = [saddle_cstar(cov, mu, th).c_star for th in np.linspace(0.1, 5.0, 25)]
    assert np.all(np.diff(c) >= 0)


def test_saddle_rejects_bad_theta():
    with pytest.raises(DomainError):
        saddle_cstar(np.eye(2), np.zeros(2), 0.0)


def test_inner_max_single_asset():
    value, w = inner_max_weights([[0.09]], [0.2], 1.3, 0.7)
    assert value == pytest.approx(1.3 * 0.7 + (1 + 0.2 * 0.7) ** 2 / (2 * 0.09 * 0.7), rel=1e-14)
    assert np.array_equal(w, [1.0])


def test_inner_max_identity():
    value, w = inner_max_weights(np.eye(2), np.zeros(2), 1.0, 1.0)
    assert value == pytest.approx(2.0, rel=1e-14)
    assert np.allclose(w, 0.5)


def test_inner_max_against_grid():
    cov = two_cov(0.3, 0.2, 0.5)
    mu = np.array([0.1, -0.1])
    value, w = inner_max_weights(cov, mu, 1.0, 2.0)
    grid = float(saddle_objective(cov, mu, 1.0, [2.0], np.linspace(0.0, 1.0, 1_000_001)).max())
    assert value == pytest.approx(grid, abs=1e-6)
    assert float(saddle_objective(cov, mu, 1.0, [2.0], [w[0]])[0, 0]) == pytest.approx(value, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(-0.95, 0.95))
def test_two_asset_value_never_exceeds_either_variance(s1, s2, rho):
    sol = min_quadratic_simplex(two_cov(s1, s2, rho))
    assert sol.value <= min(s1, s2) ** 2 * (1 + 1e-12)
