import math
import warnings

import numpy as np
import pytest
from scipy.stats import lognorm

from basket_wing import oracle
from basket_wing.black_scholes import implied_vol_from_log_price, iv_zero_order
from basket_wing.errors import ConditioningWarning, DomainError, MatrixError, RegimeError
from basket_wing.lognormal_asymptotics import (
    BasketSpec,
    density_asymptotic,
    fractional_integral_f2,
    iv_expansion_from_deltas,
    leftwing_iv_expansion,
    log_density_asymptotic,
    put_asymptotic,
    put_coefficients,
    rightwing_iv_limit,
    two_asset_classify,
    two_asset_exceptional,
    two_asset_leftwing,
)
from basket_wing.simplex_opt import min_quadratic_simplex

REF = BasketSpec.two_asset(0.3, 0.2, 0.0)


def single(sigma=0.2, T=1.0):
    return BasketSpec(np.array([1.0]), np.array([[sigma * sigma]]), T)


def test_basket_spec_invariants():
    b = BasketSpec(np.array([0.2, 0.3, 0.5]), np.array([[0.09, 0.01, 0.0], [0.01, 0.04, 0.0], [0.0, 0.0, 0.01]]), 2.0)
    assert np.allclose(b.sqrt_cov @ b.sqrt_cov.T, b.cov, atol=1e-12)
    assert np.allclose(b.mu_T, np.log(b.weights) - 0.5 * np.diag(b.cov) * 2.0, atol=1e-15)


@pytest.mark.parametrize(
    "weights, cov, T, err",
    [
        ([0.5, 0.6], np.eye(2), 1.0, DomainError),
        ([1.0, 0.0], np.eye(2), 1.0, DomainError),
        ([0.5, 0.5], np.eye(2), 0.0, DomainError),
        ([0.5, 0.5], np.eye(3), 1.0, DomainError),
        ([0.5, 0.5], [[1.0, 1.0], [1.0, 1.0]], 1.0, MatrixError),
    ],
)
def test_basket_spec_rejects_bad_input(weights, cov, T, err):
    with pytest.raises(err):
        BasketSpec(np.array(weights), np.array(cov), T)


def test_single_asset_density_matches_lognormal():
    s, T = 0.2, 1.0
    x = 1e-8
    log_exact = lognorm.logpdf(x, s * math.sqrt(T), scale=math.exp(-0.5 * s * s * T))
    assert math.exp(log_density_asymptotic(single(s, T), x) - log_exact) == pytest.approx(1.0, abs=0.02)


def test_two_asset_density_against_quadrature():
    x = 1e-6
    ratio = math.exp(log_density_asymptotic(REF, x) - oracle.quad_log_density(REF, x))
    assert 0.5 <= ratio <= 2.0


def test_density_rejects_x_at_least_one():
    with pytest.raises(DomainError):
        density_asymptotic(REF, 1.0)


def test_density_maturity_rescaling_is_a_transcription():
    # (cov, 4T) and (4 cov, T) give the same terminal law, so the formula must agree
    x = 1e-5
    long = log_density_asymptotic(BasketSpec(REF.weights, REF.cov, 4.0), x)
    scaled = log_density_asymptotic(BasketSpec(REF.weights, 4.0 * REF.cov, 1.0), x)
    assert long == pytest.approx(scaled, rel=1e-12)


def test_single_asset_put_ratio_against_quadrature():
    b = single()
    K = math.exp(-12.0)
    ratio = math.exp(oracle.quad_log_price(b, K) - put_asymptotic(b, K)[1].log_price(K))
    assert ratio == pytest.approx(1.0, abs=0.05)


def test_single_asset_put_coefficients():
    s, T = 0.25, 2.0
    c = put_coefficients(single(s, T))
    assert c.delta3 == pytest.approx(1 / (2 * T * s * s), rel=1e-14)
    assert c.delta1 == -2.0
    # mu_T = -s^2 T / 2 gives delta2 = -1 + 1/2
    assert c.delta2 == pytest.approx(-0.5, rel=1e-14)


def test_two_asset_put_sandwich_trends_to_one():
    ks = [10.0, 11.0, 12.0, 13.0, 14.0]
    coeffs = put_coefficients(REF)
    ratios = [math.exp(oracle.quad_log_price(REF, math.exp(-k)) - coeffs.log_price(math.exp(-k))) for k in ks]
    assert all(0.8 <= r <= 1.25 for r in ratios)
    gaps = np.abs(np.log(ratios))
    assert np.all(np.diff(gaps) < 0)


@pytest.mark.parametrize("cov", [np.eye(3) * 0.04, np.array([[0.09, 0.02], [0.02, 0.04]]), np.diag([0.04])])
def test_delta1_counts_support(cov):
    n = cov.shape[0]
    c = put_coefficients(BasketSpec(np.full(n, 1.0 / n), cov, 1.0))
    assert c.delta1 == -(3 + min_quadratic_simplex(cov).n_bar) / 2


def test_put_asymptotic_rejects_large_strike():
    with pytest.raises(DomainError):
        put_asymptotic(REF, 1.0)


def test_fractional_integral_exponential():
    assert fractional_integral_f2(lambda t: math.exp(-t), 2.0) == pytest.approx(math.exp(-2.0), rel=1e-8)


def test_fractional_integral_power_law():
    assert fractional_integral_f2(lambda t: t**-4, 3.0) == pytest.approx(3.0**-2 / 6, rel=1e-8)


def test_fractional_integral_log_mode():
    got = fractional_integral_f2(lambda t: -t, 50.0, log=True)
    assert got == pytest.approx(-50.0, rel=1e-10)


def test_fractional_integral_lognormal_limit():
    T, sv = 1.0, 0.3

    def log_m(tau):
        # tau^-3 p(1/tau), p the log-normal density of exp(sv W_T)
        y = -math.log(tau)
        return -3 * math.log(tau) - y * y / (2 * T * sv * sv) - math.log(sv * math.sqrt(2 * math.pi * T)) + math.log(tau)

    sigma = math.exp(20.0)
    u = math.log(sigma)
    b_prime = (u / (T * sv * sv)) / sigma
    lhs = fractional_integral_f2(log_m, sigma, log=True) + 2 * math.log(b_prime) - log_m(sigma)
    assert math.exp(lhs) == pytest.approx(1.0, abs=0.05)


def test_fractional_integral_divergent_raises():
    from basket_wing.errors import IntegrationError

    with pytest.raises(IntegrationError):
        fractional_integral_f2(lambda t: t**-1.5, 1.0)


def test_single_asset_expansion_is_flat():
    e = leftwing_iv_expansion(single(0.2))
    assert e.c0 == pytest.approx(0.2, rel=1e-14)
    assert e.c1 == pytest.approx(0.0, abs=1e-14)
    assert e.c_loglog == 0.0


def test_leading_term_identities():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        a = rng.standard_normal((n, n))
        cov = 0.05 * (a @ a.T / n + 0.2 * np.eye(n))
        lam = rng.dirichlet(np.ones(n))
        b = BasketSpec(lam, cov, 1.5)
        e = leftwing_iv_expansion(b)
        sol = min_quadratic_simplex(cov)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            c = put_coefficients(b)
        assert e.c0**2 * sol.A_row_sums.sum() == pytest.approx(1.0, abs=1e-12)
        assert e.c0**2 == pytest.approx(sol.value, abs=1e-12)
        assert c.delta3 == pytest.approx(1.0 / (2 * 1.5 * e.c0**2), rel=1e-12)
        d = iv_expansion_from_deltas(c, 1.5)
        assert d.c0 == pytest.approx(e.c0, rel=1e-12)
        assert d.c1 == pytest.approx(e.c1, rel=1e-10, abs=1e-14)
        assert d.c_loglog == pytest.approx(e.c_loglog, rel=1e-10, abs=1e-14)


def test_below_regime_leading_term_is_sigma_inf():
    r = two_asset_classify(0.3, 0.2, 0.0)
    assert leftwing_iv_expansion(REF).c0 == pytest.approx(r.sigma_inf, rel=1e-13)


def test_leftwing_convergence_rate_against_quadrature():
    e = leftwing_iv_expansion(REF)
    errs = []
    for k in (8.0, 12.0, 16.0):
        K = math.exp(-k)
        iv = implied_vol_from_log_price(oracle.quad_log_price(REF, K), 1.0, K, 1.0, "put")
        errs.append(abs(iv - (e.c0 + e.c1 / k)))
    # k^-2 decay within a factor 3
    for (k0, e0), (k1, e1) in zip(zip((8.0, 12.0), errs), zip((12.0, 16.0), errs[1:])):
        predicted = e0 * (k0 / k1) ** 2
        assert predicted / 3 <= e1 <= 3 * predicted


def test_expansion_rejects_strikes_near_the_money():
    with pytest.raises(DomainError):
        leftwing_iv_expansion(REF)(0.5)


def test_rightwing_limit():
    assert rightwing_iv_limit(REF)[0] == pytest.approx(0.3)
    assert rightwing_iv_limit(REF)[2] == 1


def test_rightwing_multiplicity_needs_both_maxima():
    cov = np.diag([0.04, 0.04, 0.01])
    assert rightwing_iv_limit(BasketSpec(np.array([0.4, 0.4, 0.2]), cov, 1.0))[2] == 2
    assert rightwing_iv_limit(BasketSpec(np.array([0.5, 0.3, 0.2]), cov, 1.0))[2] == 1


def test_rightwing_against_quadrature_call():
    K = math.exp(8.0)
    iv = implied_vol_from_log_price(oracle.quad_log_price(REF, K, "call"), 1.0, K, 1.0, "call")
    # convergence to the dominant volatility is slow; the quadrature call IV
    # approaches it from below as the strike grows
    iv_far = implied_vol_from_log_price(oracle.quad_log_price(REF, math.exp(16.0), "call"), 1.0, math.exp(16.0), 1.0, "call")
    assert iv < iv_far < 0.3 + 1e-3
    assert 0.3 - iv_far < 0.3 - iv


def test_classify_regimes():
    assert two_asset_classify(0.3, 0.2, 0.8).regime == "above"
    assert two_asset_classify(0.3, 0.2, 2 / 3).regime == "exceptional"
    r = two_asset_classify(0.3, 0.2, 0.0)
    assert r.regime == "below"
    assert r.sigma_inf == pytest.approx(0.166410, abs=1e-6)
    assert r.v_bar == pytest.approx(0.307692, abs=1e-6)
    assert r.sigma_inf**2 == pytest.approx(min_quadratic_simplex(r.cov()).value, rel=1e-13)


def test_classify_needs_sorted_vols():
    with pytest.raises(DomainError):
        two_asset_classify(0.2, 0.3, 0.0)


def test_near_critical_correlation_warns():
    with pytest.warns(ConditioningWarning):
        two_asset_classify(0.3, 0.2, 2 / 3 - 5e-7)


def test_regime_continuity():
    r = two_asset_classify(0.3, 0.2, 2 / 3 - 1e-6)
    assert r.sigma_inf == pytest.approx(0.2, abs=1e-4)
    assert r.v_bar == pytest.approx(0.0, abs=1e-4)


def test_two_asset_leftwing_above():
    e = two_asset_leftwing(two_asset_classify(0.3, 0.2, 0.8), (0.5, 0.5), 1.0)
    assert e.c0 == 0.2
    assert e.c1 == pytest.approx(0.2 * math.log(2.0), rel=1e-14)
    assert e.c_loglog == 0.0


def test_two_asset_leftwing_below_matches_general_formula():
    r = two_asset_classify(0.3, 0.2, 0.0)
    e = two_asset_leftwing(r, (0.5, 0.5), 1.0)
    g = leftwing_iv_expansion(REF)
    assert e.c_loglog == pytest.approx(-0.5 * r.sigma_inf**3, rel=1e-14)
    for a, b in ((e.c0, g.c0), (e.c1, g.c1), (e.c_loglog, g.c_loglog)):
        assert a == pytest.approx(b, abs=1e-10)


def test_exceptional_is_refused_by_expansions():
    with pytest.raises(RegimeError):
        two_asset_leftwing(two_asset_classify(0.3, 0.2, 2 / 3), (0.5, 0.5), 1.0)
    with pytest.raises(RegimeError):
        leftwing_iv_expansion(BasketSpec.two_asset(0.3, 0.2, 2 / 3))


def test_exceptional_envelope():
    r = two_asset_classify(0.3, 0.2, 2 / 3, (0.5, 0.5), 1.0)
    assert r.V2 == pytest.approx(math.log(5 / 4), rel=1e-14)
    w20 = two_asset_exceptional(r, (0.5, 0.5), 1.0, math.exp(-20.0))
    w40 = two_asset_exceptional(r, (0.5, 0.5), 1.0, math.exp(-40.0))
    # the envelope underflows in linear space at this strike
    assert math.isfinite(w20.log_envelope) and w20.log_envelope < -20.0
    assert w20.iv_leading == 0.2 and w40.iv_leading == 0.2
    assert abs(w40.iv_zero_order - 0.2) < abs(w20.iv_zero_order - 0.2)
    direct = iv_zero_order(lambda K: w20.log_envelope, math.exp(-20.0), 1.0, log_space=True)
    assert w20.iv_zero_order == pytest.approx(direct, rel=1e-12)


def test_exceptional_rejects_strike_near_the_money():
    r = two_asset_classify(0.3, 0.2, 2 / 3)
    with pytest.raises(DomainError):
        two_asset_exceptional(r, (0.5, 0.5), 1.0, 0.1)
    with pytest.raises(RegimeError):
        two_asset_exceptional(two_asset_classify(0.3, 0.2, 0.1), (0.5, 0.5), 1.0, 1e-9)
