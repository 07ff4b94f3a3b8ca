"""Small- and large-strike asymptotics for basket options when the assets
follow a driftless multidimensional Black-Scholes model.

The basket is ``S_T = sum_i exp(Y_i)`` with
``Y_i = log(lambda_i) - b_ii T / 2 + (B^{1/2} W_T)_i`` and all assets started
at 1.  Everything in the left wing is driven by the simplex minimiser of
``w'Bw`` (see :mod:`basket_wing.simplex_opt`): its support, the reduced matrix
and the row sums ``A_k`` of the reduced inverse.

Asymptotic prices are exposed in log space as well, because at the strikes
where the formulas become accurate the prices themselves underflow.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .black_scholes import iv_zero_order
from .errors import (
    AssumptionWarning,
    ConditioningWarning,
    DomainError,
    IntegrationError,
    RegimeError,
)
from .simplex_opt import SimplexSolution, min_quadratic_simplex, validate_cov

EXCEPTIONAL_TOL = 1e-12
NEAR_EXCEPTIONAL_TOL = 1e-6
LEFT_WING_MAX_STRIKE = math.exp(-1.0)
EXCEPTIONAL_MAX_STRIKE = math.exp(-3.0)


@dataclass(frozen=True)
class BasketSpec:
    weights: np.ndarray
    cov: np.ndarray
    maturity: float
    sqrt_cov: np.ndarray = field(init=False, repr=False)
    mu_T: np.ndarray = field(init=False)

    def __post_init__(self):
        lam = np.array(self.weights, dtype=float, ndmin=1)
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise DomainError("weights must be positive and finite")
        if abs(lam.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must sum to 1, got {lam.sum()!r}")
        cov = validate_cov(self.cov)
        if cov.shape[0] != lam.size:
            raise DomainError("cov and weights disagree on the number of assets")
        if not (math.isfinite(self.maturity) and self.maturity > 0):
            raise DomainError("maturity must be positive")
        eig, vec = np.linalg.eigh(cov)
        root = (vec * np.sqrt(eig)) @ vec.T
        object.__setattr__(self, "weights", lam)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "maturity", float(self.maturity))
        object.__setattr__(self, "sqrt_cov", 0.5 * (root + root.T))
        object.__setattr__(self, "mu_T", np.log(lam) - 0.5 * np.diag(cov) * self.maturity)

    @property
    def n(self) -> int:
        return self.weights.size

    @classmethod
    def two_asset(cls, sigma1, sigma2, rho, weights=(0.5, 0.5), maturity=1.0) -> "BasketSpec":
        s12 = rho * sigma1 * sigma2
        return cls(np.asarray(weights, float), np.array([[sigma1**2, s12], [s12, sigma2**2]]), maturity)

    def simplex(self) -> SimplexSolution:
        return min_quadratic_simplex(self.cov)


@dataclass(frozen=True)
class PutAsymptoticCoeffs:
    delta0: float
    delta1: float
    delta2: float
    delta3: float
    c_T: float
    log_delta0: float = 0.0

    def log_price(self, strike):
        """Log of the leading put asymptotics (no error factor)."""
        L = np.log(1.0 / np.asarray(strike, dtype=float))
        out = self.log_delta0 + self.delta1 * np.log(L) + self.delta2 * L - self.delta3 * L * L
        return float(out) if np.ndim(out) == 0 else out

    def price(self, strike):
        return np.exp(self.log_price(strike))


@dataclass(frozen=True)
class IvExpansion:
    """``I(K) = c0 + c1 / L + c_loglog log(L) / L^2`` with ``L = log(1/K)``."""

    c0: float
    c1: float
    c_loglog: float
    order: int = 2

    def at_log_strike(self, k):
        k = np.asarray(k, dtype=float)
        if np.any(k <= 1.0):
            raise DomainError("left-wing expansion needs log(1/K) > 1")
        inv = 1.0 / k
        out = self.c0 + inv * (self.c1 + self.c_loglog * np.log(k) * inv)
        return float(out) if out.ndim == 0 else out

    def __call__(self, strike):
        strike = np.asarray(strike, dtype=float)
        if np.any(strike <= 0) or np.any(strike >= LEFT_WING_MAX_STRIKE):
            raise DomainError("left-wing expansion is evaluated only for 0 < K < exp(-1)")
        return self.at_log_strike(-np.log(strike))


@dataclass(frozen=True)
class TwoAssetRegime:
    sigma1: float
    sigma2: float
    rho: float
    regime: str
    sigma_inf: float | None = None
    v_bar: float | None = None
    V1T: float | None = None
    V2: float | None = None

    @property
    def rho_star(self) -> float:
        return self.sigma2 / self.sigma1

    def cov(self) -> np.ndarray:
        s12 = self.rho * self.sigma1 * self.sigma2
        return np.array([[self.sigma1**2, s12], [s12, self.sigma2**2]])


@dataclass(frozen=True)
class ExceptionalWing:
    log_envelope: float
    iv_leading: float
    iv_zero_order: float

    @property
    def envelope(self) -> float:
        return math.exp(self.log_envelope)


def assumption_a_heuristic(sol: SimplexSolution, cov, *, warn: bool = True) -> bool:
    """Cheap proxy for the nondegeneracy assumption behind the density
    asymptotics: positive row sums on the support and strict complementarity
    off the support.  Emits :class:`AssumptionWarning` when it fails."""
    ok = sol.n_bar >= 1 and bool(np.all(sol.A_row_sums > 0))
    if ok and sol.n_bar < len(sol.w_bar):
        ok = sol.kkt_slack(cov) > 1e-10 * sol.value
    if not ok and warn:
        warnings.warn("simplex minimiser is degenerate; density asymptotics may not apply", AssumptionWarning, stacklevel=3)
    return ok


def _support_terms(basket: BasketSpec, sol: SimplexSolution):
    idx = np.array(sol.support)
    A = sol.A_row_sums
    total = float(A.sum())
    mu_bar = basket.mu_T[idx]
    v = np.log(total / A) + mu_bar
    return A, total, v


def _log_c_T(basket: BasketSpec, sol: SimplexSolution) -> float:
    A, total, v = _support_terms(basket, sol)
    T = basket.maturity
    _, logdet = np.linalg.slogdet(sol.B_bar)
    quad = float(v @ np.linalg.solve(sol.B_bar, v))
    return (
        -0.5 * math.log(2.0 * math.pi * T)
        - 0.5 * logdet
        + 0.5 * math.log(total)
        - 0.5 * float(np.sum(np.log(A)))
        - quad / (2.0 * T)
    )


def _check_left_strike(x: float, name: str = "x"):
    if not (0 < x < 1) or not math.isfinite(x):
        raise DomainError(f"{name} must lie in (0, 1)")


def log_density_asymptotic(basket: BasketSpec, x: float) -> float:
    """Log of the leading small-``x`` density asymptotics of the basket."""
    _check_left_strike(x)
    sol = basket.simplex()
    assumption_a_heuristic(sol, basket.cov)
    A, total, v = _support_terms(basket, sol)
    T = basket.maturity
    L = -math.log(x)
    exponent = -1.0 + float(A @ v) / T
    return _log_c_T(basket, sol) + 0.5 * (1 - sol.n_bar) * math.log(L) + exponent * math.log(x) - total * L * L / (2.0 * T)


def density_asymptotic(basket: BasketSpec, x: float) -> float:
    return math.exp(log_density_asymptotic(basket, x))


def put_coefficients(basket: BasketSpec) -> PutAsymptoticCoeffs:
    sol = basket.simplex()
    assumption_a_heuristic(sol, basket.cov)
    A, total, v = _support_terms(basket, sol)
    T = basket.maturity
    log_c = _log_c_T(basket, sol)
    log_d0 = log_c + 2.0 * math.log(T) - 2.0 * math.log(total)
    return PutAsymptoticCoeffs(
        delta0=math.exp(log_d0),
        delta1=-(3.0 + sol.n_bar) / 2.0,
        delta2=-1.0 - float(A @ v) / T,
        delta3=total / (2.0 * T),
        c_T=math.exp(log_c),
        log_delta0=float(log_d0),
    )


def put_asymptotic(basket: BasketSpec, strike: float) -> tuple[float, PutAsymptoticCoeffs]:
    """Leading small-strike put price and the coefficients that define it."""
    _check_left_strike(strike, "strike")
    coeffs = put_coefficients(basket)
    return float(coeffs.price(strike)), coeffs


def fractional_integral_f2(m: Callable[[float], float], sigma: float, *, log: bool = False) -> float:
    """``int_sigma^inf (tau - sigma) m(tau) dtau`` by adaptive quadrature.

    With ``log=True`` the callable returns ``log m`` and the log of the
    integral is returned, which keeps rapidly decaying weights representable.
    The integral is taken in ``s = log(tau / sigma)``.
    """
    if not (math.isfinite(sigma) and sigma > 0):
        raise DomainError("sigma must be positive")
    log_m = (lambda t: float(m(t))) if log else (lambda t: math.log(m(t)) if m(t) > 0 else -math.inf)
    ref = log_m(sigma)
    if not math.isfinite(ref):
        raise DomainError("m(sigma) must be positive and finite")

    # tau = sigma e^s:  (tau - sigma) m(tau) dtau = sigma^2 expm1(s) e^s m(tau) ds
    def integrand(s):
        tau = sigma * math.exp(s)
        if not math.isfinite(tau):
            return 0.0
        lm = log_m(tau)
        if lm == -math.inf:
            return 0.0
        return math.expm1(s) * math.exp(lm - ref + s)

    # local decay rate sets the integration scale; segments grow geometrically
    # until the integrand is negligible, which bounds the truncated tail
    h = 1e-4
    rate = -(log_m(sigma * math.exp(h)) - ref) / h
    scale = 1.0 / max(rate, 1.0)
    s_cap = math.log(1e300 / sigma)
    if s_cap <= 0:
        raise DomainError("sigma too large")
    total = 0.0
    a = 0.0
    b = scale
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        while True:
            b = min(b, s_cap)
            try:
                val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-10, limit=200)
            except integrate.IntegrationWarning as exc:
                raise IntegrationError(f"fractional integral did not converge: {exc}") from None
            total += val
            edge = integrand(b)
            if not math.isfinite(total):
                raise IntegrationError("fractional integral diverges")
            if total > 0 and edge * max(1.0, b) <= 1e-12 * total:
                break
            if b >= s_cap:
                raise IntegrationError("fractional integral tail does not decay (divergent integral?)")
            a, b = b, 4.0 * b
    value = total * sigma * sigma
    if log:
        return math.log(value) + ref
    return value * math.exp(ref)


def iv_expansion_from_deltas(coeffs: PutAsymptoticCoeffs, maturity: float) -> IvExpansion:
    """Implied volatility expansion expressed through the put coefficients."""
    d1, d2, d3 = coeffs.delta1, coeffs.delta2, coeffs.delta3
    root = math.sqrt(2.0 * maturity * d3)
    return IvExpansion(
        c0=1.0 / root,
        c1=(1.0 + 2.0 * d2) / (4.0 * d3 * root),
        c_loglog=(d1 + 2.0) / (2.0 * d3 * root),
    )


def _exceptional_pair(basket: BasketSpec) -> bool:
    if basket.n != 2:
        return False
    s = np.sqrt(np.diag(basket.cov))
    rho = basket.cov[0, 1] / (s[0] * s[1])
    return abs(rho - s.min() / s.max()) < EXCEPTIONAL_TOL


def leftwing_iv_expansion(basket: BasketSpec) -> IvExpansion:
    """Small-strike implied volatility expansion of the basket."""
    if _exceptional_pair(basket):
        raise RegimeError("exceptional two-asset configuration; use two_asset_exceptional")
    sol = basket.simplex()
    assumption_a_heuristic(sol, basket.cov)
    A, total, v = _support_terms(basket, sol)
    T = basket.maturity
    p = total**1.5
    return IvExpansion(
        c0=1.0 / math.sqrt(total),
        c1=-(2.0 * float(A @ v) + T) / (2.0 * p),
        c_loglog=-T * (sol.n_bar - 1) / (2.0 * p),
    )


def rightwing_iv_limit(basket: BasketSpec) -> tuple[float, float, int]:
    """Large-strike limit of the implied volatility, with the drift and the
    multiplicity of the dominant assets in the right tail."""
    diag = np.diag(basket.cov)
    top = diag.max()
    dominant = np.abs(diag - top) <= 1e-12 * top
    mu = float(basket.mu_T[dominant].max())
    both = dominant & (np.abs(basket.mu_T - mu) <= 1e-12 * max(1.0, abs(mu)))
    return math.sqrt(top), mu, int(both.sum())


def two_asset_classify(sigma1, sigma2, rho, weights=None, maturity=None) -> TwoAssetRegime:
    """Locate ``rho`` relative to the critical correlation ``sigma2 / sigma1``."""
    for name, val in (("sigma1", sigma1), ("sigma2", sigma2), ("rho", rho)):
        if not math.isfinite(val):
            raise DomainError(f"{name} must be finite")
    if sigma2 <= 0:
        raise DomainError("volatilities must be positive")
    if sigma1 < sigma2:
        raise DomainError("need sigma1 >= sigma2; sort the assets first")
    if not -1.0 < rho < 1.0:
        raise DomainError("rho must lie in (-1, 1)")
    rho_star = sigma2 / sigma1
    gap = rho - rho_star
    if abs(gap) < EXCEPTIONAL_TOL:
        regime = "exceptional"
    elif gap > 0:
        regime = "above"
    else:
        regime = "below"
        if -gap < NEAR_EXCEPTIONAL_TOL:
            warnings.warn("correlation is within 1e-6 of the critical value; coefficients are ill conditioned",
                          ConditioningWarning, stacklevel=2)
    sigma_inf = v_bar = None
    if regime == "below":
        denom = sigma1**2 + sigma2**2 - 2.0 * rho * sigma1 * sigma2
        sigma_inf = sigma1 * sigma2 * math.sqrt(1.0 - rho**2) / math.sqrt(denom)
        v_bar = sigma2 * (sigma2 - rho * sigma1) / denom
    V2 = math.log(1.0 / rho**2 - 1.0) if rho != 0 else None
    V1T = None
    if V2 is not None and weights is not None and maturity is not None:
        lam = np.asarray(weights, dtype=float)
        mu1 = math.log(lam[0]) - 0.5 * sigma1**2 * maturity
        mu2 = math.log(lam[1]) - 0.5 * sigma2**2 * maturity
        V1T = V2 + mu1 - mu2
    return TwoAssetRegime(float(sigma1), float(sigma2), float(rho), regime, sigma_inf, v_bar, V1T, V2)


def two_asset_leftwing(regime: TwoAssetRegime, weights, maturity: float) -> IvExpansion:
    lam = np.asarray(weights, dtype=float)
    T = float(maturity)
    if regime.regime == "exceptional":
        raise RegimeError("exceptional regime has no expansion; use two_asset_exceptional")
    if regime.regime == "above":
        s2 = regime.sigma2
        return IvExpansion(c0=s2, c1=-s2 * math.log(lam[1]), c_loglog=0.0)
    s, v = regime.sigma_inf, regime.v_bar
    bracket = (
        0.5 * T * s * s
        + (math.log(lam[0]) - 0.5 * regime.sigma1**2 * T - math.log(v)) * v
        + (math.log(lam[1]) - 0.5 * regime.sigma2**2 * T - math.log(1.0 - v)) * (1.0 - v)
    )
    return IvExpansion(c0=s, c1=-s * bracket, c_loglog=-0.5 * T * s**3)


def log_exceptional_envelope(regime: TwoAssetRegime, weights, maturity: float, strike: float) -> float:
    """Log of the put envelope at the critical correlation (triple-log terms included)."""
    if not (0 < strike < EXCEPTIONAL_MAX_STRIKE):
        raise DomainError("exceptional envelope needs 0 < K < exp(-3)")
    lam = np.asarray(weights, dtype=float)
    T = float(maturity)
    s1, s2, rho = regime.sigma1, regime.sigma2, regime.rho
    mu1 = math.log(lam[0]) - 0.5 * s1**2 * T
    mu2 = math.log(lam[1]) - 0.5 * s2**2 * T
    V1T = math.log(1.0 / rho**2 - 1.0) + mu1 - mu2
    d = T * (s1**2 - s2**2)
    L = -math.log(strike)
    LL = math.log(L)
    LLL = math.log(LL)
    return (
        (-1.0 - mu2 / (T * s2**2)) * L
        + (-V1T / d - 2.0) * LL
        + (V1T / d - 0.5) * LLL
        - L * L / (2.0 * T * s2**2)
        - LL * LL / (2.0 * d)
        - LLL * LLL / (2.0 * d)
        + LL * LLL / d
    )


def two_asset_exceptional(regime: TwoAssetRegime, weights, maturity: float, strike: float) -> ExceptionalWing:
    """Put envelope and implied volatility at the critical correlation."""
    if regime.regime != "exceptional":
        raise RegimeError(f"regime is {regime.regime!r}, not exceptional")
    log_env = log_exceptional_envelope(regime, weights, maturity, strike)
    iv0 = iv_zero_order(lambda K: log_exceptional_envelope(regime, weights, maturity, K), strike, maturity, log_space=True)
    return ExceptionalWing(log_envelope=log_env, iv_leading=regime.sigma2, iv_zero_order=iv0)
