import math

import numpy as np
import pytest
from scipy import integrate

from basket_wing import oracle
from basket_wing.black_scholes import psi
from basket_wing.errors import DomainError, MomentError
from basket_wing.lognormal_asymptotics import BasketSpec
from basket_wing.simplex_opt import min_quadratic_simplex
from basket_wing.timechange import (
    TcBasketSpec,
    TimeChangeSpec,
    laplace_transform,
    martingale_drift,
    tail_sandwich_check,
    tc_leftwing_leading,
    tc_rightwing_leading,
)

GAMMA = TimeChangeSpec.gamma(1.0, 1.0)
IG = TimeChangeSpec.inverse_gaussian(1.0, 1.0)


def tabulated_exponential(theta=1.0):
    grid = np.linspace(0.0, 80.0, 80001)
    values = np.exp(-theta * grid)
    return TimeChangeSpec.tabulated(grid, values / integrate.trapezoid(values, grid), theta, 0.0)


@pytest.mark.parametrize("tc", [GAMMA, IG, TimeChangeSpec.gamma(2.5, 3.0, 2.0)], ids=["gamma", "ig", "gamma2"])
def test_laplace_at_zero_is_one(tc):
    assert laplace_transform(tc, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_tabulated_laplace_at_zero():
    assert laplace_transform(tabulated_exponential(), 0.0) == pytest.approx(1.0, abs=1e-6)


def test_gamma_laplace_closed_form():
    assert laplace_transform(GAMMA, 1.0) == 0.5


def test_ig_laplace_against_quadrature_of_density():
    quad = integrate.quad(lambda s: math.exp(-s) * IG.pdf(s), 0.0, np.inf, limit=400)[0]
    assert laplace_transform(IG, 1.0) == pytest.approx(quad, abs=1e-6)


def test_tabulated_laplace_against_closed_form():
    assert laplace_transform(tabulated_exponential(2.0), 0.5) == pytest.approx(2.0 / 2.5, rel=1e-6)


def test_laplace_beyond_abscissa_rejected():
    with pytest.raises(DomainError):
        laplace_transform(GAMMA, -1.0)


@pytest.mark.parametrize("tc", [GAMMA, IG, TimeChangeSpec.gamma(3.0, 2.0, 0.5)], ids=["gamma", "ig", "gamma2"])
def test_closed_form_densities_are_normalised(tc):
    tc.validate()


def test_degenerate_time_change_rejected():
    grid = np.linspace(0.0, 60.0, 6001)
    spike = np.where(np.abs(grid - 1.0) < 0.05, 1.0, 0.0)
    spike /= integrate.trapezoid(spike, grid)
    with pytest.raises(DomainError):
        TimeChangeSpec.tabulated(grid, spike, 1.0, 0.0)


def test_tabulated_with_wrong_theta_rejected():
    grid = np.linspace(0.0, 80.0, 16001)
    values = np.exp(-grid)
    with pytest.raises(DomainError):
        TimeChangeSpec.tabulated(grid, values / integrate.trapezoid(values, grid), 1.5, 0.0)


def test_unnormalised_tabulated_rejected():
    grid = np.linspace(0.0, 80.0, 16001)
    with pytest.raises(DomainError):
        TimeChangeSpec.tabulated(grid, 2.0 * np.exp(-grid), 1.0, 0.0)


def test_martingale_drift_examples():
    assert martingale_drift(GAMMA, -0.25, 0.5) == 0.0
    assert martingale_drift(GAMMA, 0.0, 0.5) == pytest.approx(math.log(0.75), rel=1e-14)
    assert martingale_drift(GAMMA, 0.0, 0.5) == pytest.approx(-0.287682, abs=1e-6)


def test_moment_condition_enforced():
    with pytest.raises(MomentError):
        martingale_drift(GAMMA, 0.6, 0.8)
    with pytest.raises(MomentError):
        TcBasketSpec(np.array([1.0]), np.array([[1.5]]), np.array([0.3]), GAMMA)


def test_tabulated_compensator_matches_closed_form():
    tab = tabulated_exponential(1.0)
    assert martingale_drift(tab, 0.0, 0.5) == pytest.approx(martingale_drift(GAMMA, 0.0, 0.5), abs=1e-6)


@pytest.mark.parametrize("tc", [TimeChangeSpec.gamma(10.0, 10.0), TimeChangeSpec.inverse_gaussian(1.7841241161527712, 10.0)],
                         ids=["gamma", "ig"])
def test_assets_are_martingales_by_monte_carlo(tc):
    spec = TcBasketSpec(np.array([0.5, 0.5]), np.array([[0.09, 0.018], [0.018, 0.04]]), np.array([0.1, -0.1]), tc)
    for est in oracle.mc_asset_means(spec, 1_000_000, 12):
        assert abs(est.value - 1.0) <= 3.0 * est.std_error


def test_leftwing_single_asset():
    spec = TcBasketSpec(np.array([1.0]), np.array([[1.0]]), np.array([0.0]), GAMMA)
    coef, c_star = tc_leftwing_leading(spec)
    assert c_star == pytest.approx(math.sqrt(2.0), rel=1e-12)
    assert coef == pytest.approx(math.sqrt(psi(math.sqrt(2.0))), rel=1e-12)


def test_leftwing_psi_composition_is_exact():
    spec = TcBasketSpec(np.array([0.3, 0.7]), np.array([[0.09, 0.01], [0.01, 0.04]]), np.array([0.2, -0.1]),
                        TimeChangeSpec.gamma(2.0, 3.0, 2.0))
    coef, c_star = tc_leftwing_leading(spec)
    assert coef**2 * 2.0 == pytest.approx(psi(c_star), rel=1e-15)


def test_zero_drift_depends_on_cov_only_through_simplex_value():
    a = np.array([[0.09, 0.0], [0.0, 0.04]])
    v = min_quadratic_simplex(a).value
    b = np.array([[v * 1.5, 0.0], [0.0, v * 3.0]])
    assert min_quadratic_simplex(b).value == pytest.approx(v, rel=1e-13)
    spec_a = TcBasketSpec(np.array([0.5, 0.5]), a, np.zeros(2), GAMMA)
    spec_b = TcBasketSpec(np.array([0.5, 0.5]), b, np.zeros(2), GAMMA)
    assert tc_leftwing_leading(spec_a)[0] == pytest.approx(tc_leftwing_leading(spec_b)[0], rel=1e-12)


def test_leftwing_monotone_in_theta():
    cov, mu = np.array([[0.09, 0.01], [0.01, 0.04]]), np.array([0.1, -0.2])
    out = [tc_leftwing_leading(TcBasketSpec(np.array([0.5, 0.5]), cov, mu, TimeChangeSpec.gamma(1.0, th)))
           for th in (1.0, 2.0, 4.0, 8.0, 64.0)]
    c = [o[1] for o in out]
    coef = [o[0] for o in out]
    assert np.all(np.diff(c) > 0)
    assert np.all(np.diff(coef) < 0)
    assert c[-1] > 20 and psi(c[-1]) < 0.05


def test_rightwing_single_asset_zero_drift():
    sigma, theta = 0.4, 2.0
    spec = TcBasketSpec(np.array([1.0]), np.array([[sigma**2]]), np.array([0.0]), TimeChangeSpec.gamma(1.0, theta))
    coef, c_min = tc_rightwing_leading(spec)
    assert c_min == pytest.approx(math.sqrt(2 * theta) / sigma, rel=1e-14)
    assert coef == pytest.approx(math.sqrt(psi(c_min - 1.0)), rel=1e-14)


def test_rightwing_picks_smaller_rate():
    spec = TcBasketSpec(np.array([0.5, 0.5]), np.diag([0.09, 0.04]), np.zeros(2), GAMMA)
    _, c_min = tc_rightwing_leading(spec)
    assert c_min == pytest.approx(math.sqrt(2.0) / 0.3, rel=1e-14)
    assert c_min == pytest.approx(4.714, abs=1e-3)
    slopes = spec.asset_slopes()
    assert np.all(c_min <= slopes) and c_min == slopes.min()


def test_from_basket():
    b = BasketSpec.two_asset(0.3, 0.2, 0.1)
    spec = TcBasketSpec.from_basket(b, [0.0, 0.0], GAMMA)
    assert np.array_equal(spec.cov, b.cov) and spec.n == 2


def test_sandwich_fitted_slope_single_asset():
    spec = TcBasketSpec(np.array([1.0]), np.array([[1.0]]), np.array([0.0]), TimeChangeSpec.gamma(2.0, 2.0))
    report = tail_sandwich_check(spec, [5, 6, 7, 8], 1_000_000, 3)
    assert report.c_star == pytest.approx(2.0, rel=1e-12)
    assert abs(report.fitted_slope / report.c_star - 1.0) < 0.10
    assert report.band_ok
    again = tail_sandwich_check(spec, [5, 6, 7, 8], 1_000_000, 3)
    assert report == again


def test_sandwich_rejects_small_k():
    spec = TcBasketSpec(np.array([1.0]), np.array([[1.0]]), np.array([0.0]), GAMMA)
    with pytest.raises(DomainError):
        tail_sandwich_check(spec, [2.0], 1000, 0)


def test_sandwich_marks_empty_tails_unusable():
    from basket_wing.errors import InsufficientPathsWarning
    from basket_wing.oracle import McEstimate

    spec = TcBasketSpec(np.array([1.0]), np.array([[1.0]]), np.array([0.0]), GAMMA)

    def empty(spec, k, paths, seed):
        return McEstimate(0.0, 0.0, paths, seed)

    with pytest.warns(InsufficientPathsWarning):
        report = tail_sandwich_check(spec, [5.0, 6.0], 10, 0, tail_estimator=empty)
    assert not any(e.usable for e in report.entries)
    assert report.fitted_slope is None
