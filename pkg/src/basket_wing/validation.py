"""Model-specific validation checks with compiled-in tolerances.

Each check compares an asymptotic formula with an independent numerical
answer and returns a :class:`Check`.  The command line ``validate`` command
runs every check that applies to a configured model.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import oracle
from .black_scholes import bs_price, implied_vol_from_log_price
from .copula import (
    CopulaSpec,
    chi_numeric,
    comonotone_logcdf,
    gaussian_copula_logcdf,
    gumbel_copula_logcdf,
    independence_logcdf,
    tailwing_right,
)
from .lognormal_asymptotics import (
    BasketSpec,
    _exceptional_pair,
    leftwing_iv_expansion,
    rightwing_iv_limit,
    two_asset_classify,
    two_asset_exceptional,
    two_asset_leftwing,
)
from .simplex_opt import saddle_cstar
from .timechange import TcBasketSpec, tc_leftwing_leading, tc_rightwing_leading

FLAT_TOL = 1e-6
IDENTITY_TOL = 1e-12
SADDLE_TOL = 1e-5
CHI_RTOL = 0.02
TAIL_SLOPE_RTOL = 0.10
TC_IV_RTOL = 0.15
MC_SIGMAS = 3.0
PARITY_TOL = 1e-12


@dataclass(frozen=True)
class Check:
    name: str
    measured: float | None
    tolerance: float | None
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _finite(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _monotone_decrease(name: str, ks, errors, detail: str) -> Check:
    errors = [abs(e) for e in errors]
    ok = len(errors) >= 2 and all(b < a for a, b in zip(errors, errors[1:]))
    ratio = errors[-1] / errors[0] if errors and errors[0] > 0 else math.nan
    text = f"{detail}; errors " + ", ".join(f"k={k:g}: {e:.3e}" for k, e in zip(ks, errors))
    return Check(name, _finite(ratio), 1.0, ok, text)


# --------------------------------------------------------------------------
# saddle constant by brute force


def saddle_objective(cov, drift, theta: float, t, w1) -> np.ndarray:
    """Two-asset saddle objective on a grid: ``t`` along rows, ``w1`` along columns.

    For fixed ``(t, w)`` the inner maximum over scalings of ``w`` is
    ``theta t + max(0, 1 + t mu'w)^2 / (2 t w'Bw)``.
    """
    B = np.asarray(cov, dtype=float)
    mu = np.asarray(drift, dtype=float)
    t = np.asarray(t, dtype=float)[:, None]
    w1 = np.asarray(w1, dtype=float)[None, :]
    w2 = 1.0 - w1
    v = B[0, 0] * w1**2 + 2.0 * B[0, 1] * w1 * w2 + B[1, 1] * w2**2
    m = mu[0] * w1 + mu[1] * w2
    gain = np.maximum(1.0 + t * m, 0.0)
    return theta * t + gain**2 / (2.0 * t * v)


def brute_force_cstar(cov, drift, theta: float, step: float = 1e-3, refinements: int = 4) -> float:
    """``min_t max_w`` on the grid ``[0.01, 10] x [0, 1]``, then zoomed grids."""
    B = np.asarray(cov, dtype=float)
    mu = np.asarray(drift, dtype=float)
    if B.shape == (1, 1):
        # a perfectly correlated copy leaves w'Bw and mu'w unchanged on the simplex
        B = np.full((2, 2), B[0, 0])
        mu = np.array([mu[0], mu[0]])
    t = np.arange(0.01, 10.0 + 0.5 * step, step)
    w = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    inner = np.empty(t.size)
    for lo in range(0, t.size, 500):
        inner[lo:lo + 500] = saddle_objective(B, mu, theta, t[lo:lo + 500], w).max(axis=1)
    i = int(np.argmin(inner))
    t0, dt = t[i], step
    value = inner[i]
    for _ in range(refinements):
        t = np.linspace(max(t0 - 2 * dt, 1e-6), t0 + 2 * dt, 201)
        inner = np.empty(t.size)
        for j, tj in enumerate(t):
            # the inner maximum is found on a full grid, then zoomed
            f = saddle_objective(B, mu, theta, [tj], w)[0]
            wj = w[int(np.argmax(f))]
            fine = np.clip(np.linspace(wj - 2 * step, wj + 2 * step, 401), 0.0, 1.0)
            inner[j] = max(f.max(), saddle_objective(B, mu, theta, [tj], fine)[0].max())
        i = int(np.argmin(inner))
        t0, dt, value = t[i], t[1] - t[0], inner[i]
    return float(value)


# --------------------------------------------------------------------------
# plain Black-Scholes basket


def _expansion_errors(basket: BasketSpec, ks, nodes: int):
    exp = leftwing_iv_expansion(basket)
    pts = oracle.empirical_iv_curve(oracle.quad_pricer(basket, nodes), ks, "left", basket.maturity)
    return exp, [p.iv - exp.at_log_strike(p.k) for p in pts]


def check_bs(basket: BasketSpec, k_grid, oracle_kind: str, paths: int, seed: int, nodes: int) -> list[Check]:
    checks = []
    left_ks = [k for k in k_grid if k > 3.0]
    exceptional = _exceptional_pair(basket)
    if not exceptional:
        exp = leftwing_iv_expansion(basket)
        gap = abs(exp.c0**2 - basket.simplex().value)
        checks.append(Check("leading_term_identity", gap, IDENTITY_TOL, gap <= IDENTITY_TOL,
                            "c0^2 against the simplex minimum of w'Bw"))
    if basket.n == 1:
        sigma = math.sqrt(basket.cov[0, 0])
        coeff = max(abs(exp.c0 - sigma), abs(exp.c1), abs(exp.c_loglog))
        checks.append(Check("single_asset_coefficients", coeff, IDENTITY_TOL, coeff <= IDENTITY_TOL,
                            "c0 = sigma, c1 = c_loglog = 0"))
    if basket.n == 2:
        s = np.sqrt(np.diag(basket.cov))
        order = np.argsort(-s)
        rho = basket.cov[0, 1] / (s[0] * s[1])
        lam = basket.weights[order]
        regime = two_asset_classify(s[order[0]], s[order[1]], rho, lam, basket.maturity)
        if regime.regime == "above":
            base = two_asset_leftwing(regime, lam, basket.maturity)
            rho2 = 0.5 * (rho + 1.0)
            other = two_asset_leftwing(two_asset_classify(regime.sigma1, regime.sigma2, rho2), lam, basket.maturity)
            same = base.c0 == other.c0 == regime.sigma2 and base.c1 == other.c1
            checks.append(Check("above_regime_rho_invariance", abs(base.c1 - other.c1), 0.0, same,
                                f"c0, c1 at rho={rho:g} and rho={rho2:g}"))
        if regime.regime == "exceptional" and left_ks:
            zero = [two_asset_exceptional(regime, lam, basket.maturity, math.exp(-k)).iv_zero_order for k in left_ks]
            checks.append(_monotone_decrease("exceptional_convergence", left_ks,
                                             [z - regime.sigma2 for z in zero],
                                             "zero-order implied vol against sigma2"))

    if oracle_kind == "quad":
        if basket.n == 1:
            sigma = math.sqrt(basket.cov[0, 0])
            pts = oracle.empirical_iv_curve(oracle.quad_pricer(basket, nodes), k_grid, "left", basket.maturity)
            dev = max(abs(p.iv - sigma) for p in pts)
            checks.append(Check("single_asset_flat_curve", dev, FLAT_TOL, dev <= FLAT_TOL,
                                "quadrature implied vol against sigma on the grid"))
        elif not exceptional:
            ks = [k for k in k_grid if k > 1.0]
            _, errs = _expansion_errors(basket, ks, nodes)
            checks.append(_monotone_decrease("left_wing_convergence", ks, errs,
                                             "quadrature implied vol against the expansion"))
        elif left_ks:
            sigma2 = float(np.sqrt(np.diag(basket.cov)).min())
            pts = oracle.empirical_iv_curve(oracle.quad_pricer(basket, nodes), left_ks, "left", basket.maturity)
            checks.append(_monotone_decrease("exceptional_oracle_convergence", left_ks,
                                             [p.iv - sigma2 for p in pts],
                                             "quadrature implied vol against sigma2"))
        sig_max = rightwing_iv_limit(basket)[0]
        pts = oracle.empirical_iv_curve(oracle.quad_pricer(basket, nodes), k_grid, "right", basket.maturity)
        if basket.n == 1:
            dev = max(abs(p.iv - sig_max) for p in pts)
            checks.append(Check("right_wing_flat_curve", dev, FLAT_TOL, dev <= FLAT_TOL,
                                "quadrature call implied vol against sigma"))
        else:
            checks.append(_monotone_decrease("right_wing_convergence", list(k_grid),
                                             [p.iv - sig_max for p in pts],
                                             "quadrature call implied vol against sigma_max"))
    elif oracle_kind == "mc":
        means = oracle.mc_basket_asset_means(basket, paths, seed)
        z = max(abs(m.value - 1.0) / m.std_error for m in means)
        checks.append(Check("mc_martingale", z, MC_SIGMAS, z <= MC_SIGMAS,
                            "compensated asset means in standard errors"))
        call, put = (oracle.mc_basket_prices(basket, [0.9], paths, seed, kind=kd, martingale_correction=True)[0]
                     for kd in ("call", "put"))
        gap = abs(call.value - put.value - 0.1)
        checks.append(Check("mc_put_call_parity", gap, PARITY_TOL, gap <= PARITY_TOL,
                            "call minus put against S0 - K at K = 0.9"))
        if basket.n == 1:
            sigma = math.sqrt(basket.cov[0, 0])
            ref = float(bs_price(1.0, 0.8, sigma, basket.maturity, "put"))
        else:
            ref = math.exp(oracle.quad_log_price(basket, 0.8, "put")) if basket.n == 2 else None
        if ref is not None:
            est = oracle.mc_basket_put(basket, 0.8, paths, seed)
            z = abs(est.value - ref) / est.std_error
            checks.append(Check("mc_against_reference", z, MC_SIGMAS, z <= MC_SIGMAS,
                                "Monte Carlo put at K = 0.8 in standard errors"))
    return checks


# --------------------------------------------------------------------------
# time-changed basket


def check_timechange(spec: TcBasketSpec, k_grid, oracle_kind: str, paths: int, seed: int, nodes: int) -> list[Check]:
    checks = []
    tc = spec.timechange
    if oracle_kind == "mc":
        means = oracle.mc_asset_means(spec, paths, seed)
        z = max(abs(m.value - 1.0) / m.std_error for m in means)
        checks.append(Check("mc_martingale", z, MC_SIGMAS, z <= MC_SIGMAS,
                            "compensated asset means in standard errors"))
    if spec.n <= 2:
        sp = saddle_cstar(spec.cov, spec.mu, tc.theta)
        brute = brute_force_cstar(spec.cov, spec.mu, tc.theta)
        gap = abs(sp.c_star - brute)
        checks.append(Check("saddle_brute_force", gap, SADDLE_TOL, gap <= SADDLE_TOL,
                            "saddle constant against a refined (t, w) grid"))
    coef, c_star = tc_leftwing_leading(spec)
    tail_ks = [k for k in k_grid if 5.0 <= k <= 12.0]
    if oracle_kind == "mc" and tail_ks:
        for k in tail_ks:
            est = oracle.mc_timechanged_tail(spec, k, paths, seed)
            slope = -math.log(est.value) / k if est.value > 0 else math.nan
            err = abs(slope / c_star - 1.0)
            checks.append(Check(f"tail_slope_k{k:g}", _finite(err), TAIL_SLOPE_RTOL, err <= TAIL_SLOPE_RTOL,
                                f"-log P[S <= e^-k] / k = {slope:.6g} against c* = {c_star:.6g}"))
    if spec.n == 1 and oracle_kind != "none":
        k = max(k_grid)
        if oracle_kind == "quad":
            lp = oracle.quad_timechanged_log_price(spec, math.exp(-k), "put", nodes)
        else:
            est = oracle.mc_timechanged_put(spec, math.exp(-k), paths, seed)
            lp = math.log(est.value) if est.value > 0 else -math.inf
        iv = implied_vol_from_log_price(lp, 1.0, math.exp(-k), spec.maturity, "put")
        err = abs(iv / math.sqrt(k) / coef - 1.0)
        checks.append(Check("left_wing_leading_term", err, TC_IV_RTOL, err <= TC_IV_RTOL,
                            f"implied vol / sqrt(k) at k={k:g} against sqrt(psi(c*)/T)"))
        if oracle_kind == "quad":
            rcoef = tc_rightwing_leading(spec)[0]
            ks = list(k_grid)
            pts = oracle.empirical_iv_curve(oracle.tc_quad_pricer(spec, nodes), ks, "right", spec.maturity)
            checks.append(_monotone_decrease("right_wing_convergence", ks,
                                             [p.iv / math.sqrt(p.k) - rcoef for p in pts],
                                             "call implied vol / sqrt(k) against sqrt(psi(c_min - 1)/T)"))
    return checks


# --------------------------------------------------------------------------
# copula


def _numeric_counterpart(copula: CopulaSpec, gumbel_theta: float | None):
    if copula.family == "gaussian" and copula.R.shape == (2, 2):
        return CopulaSpec.numeric(gaussian_copula_logcdf(float(copula.R[0, 1])))
    if gumbel_theta is not None:
        return CopulaSpec.numeric(gumbel_copula_logcdf(gumbel_theta))
    return None


def check_copula(copula: CopulaSpec, eta, right_slopes, maturity: float, k_grid,
                 gumbel_theta: float | None = None) -> list[Check]:
    checks = []
    eta = np.asarray(eta, dtype=float)
    chi = copula.chi(eta)
    chi2 = copula.chi(2.0 * eta)
    checks.append(Check("chi_homogeneity", abs(chi - chi2), IDENTITY_TOL, abs(chi - chi2) <= IDENTITY_TOL,
                        "chi(2 alpha) against chi(alpha)"))
    numeric = _numeric_counterpart(copula, gumbel_theta)
    if numeric is not None:
        ones = np.ones(eta.size)
        est, diag = chi_numeric(numeric, ones)
        err = abs(est / copula.chi(ones) - 1.0)
        checks.append(Check("chi_numeric_agreement", err, CHI_RTOL, err <= CHI_RTOL,
                            f"ladder estimate {est:.6g} at u={diag.ladder[-1]:g}"))
    if right_slopes is not None:
        base = copula_right_curve(copula, right_slopes, maturity, k_grid)
        same = all(
            copula_right_curve(other, right_slopes, maturity, k_grid) == base
            for other in (CopulaSpec.numeric(independence_logcdf), CopulaSpec.numeric(comonotone_logcdf))
        )
        checks.append(Check("right_wing_copula_independence", 0.0 if same else 1.0, 0.0, same,
                            "right wing under the configured, independence and comonotone copulas"))
    return checks


def copula_right_curve(copula: CopulaSpec, right_slopes, maturity: float, k_grid) -> list[float]:
    """Right-wing implied vols of a copula model; only the marginal slopes enter."""
    del copula
    return [tailwing_right(right_slopes, maturity, float(k)) for k in k_grid]
