"""Weak lower tail dependence and copula tail-wing formulas.

For a copula ``C`` the weak lower tail dependence function is

    chi(alpha) = lim_{u -> 0} min_i log(u^alpha_i) / log C(u^alpha_1, ..., u^alpha_n),

homogeneous of degree zero in ``alpha``.  Combined with marginal left tails
``log G_i(-k) ~ eta_i log G(-k)`` it fixes the left-wing slope of the basket
implied variance.  The right wing only sees the fattest marginal.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import log_ndtr, ndtri

from .black_scholes import psi
from .errors import DomainError, MatrixError, PrecisionWarning
from .simplex_opt import min_quadratic_simplex

DEFAULT_LADDER = tuple(10.0 ** -j for j in range(2, 13, 2))


@dataclass(frozen=True)
class CopulaSpec:
    """Copula family descriptor.

    ``gaussian`` carries a correlation matrix, ``archimedean`` the regular
    variation index ``lam`` of ``log phi^{-1}``, ``strong_dependence`` the
    lower tail dependence coefficient, ``numeric`` an evaluator of
    ``log C`` (or of ``C`` with ``log_evaluator=False``).
    """

    family: str
    R: np.ndarray | None = None
    lam: float | None = None
    lambda_L: float | None = None
    evaluator: Callable | None = field(default=None, repr=False, compare=False)
    log_evaluator: bool = True

    @classmethod
    def gaussian(cls, R) -> "CopulaSpec":
        R = np.array(R, dtype=float, ndmin=2)
        if R.shape[0] != R.shape[1] or not np.allclose(R, R.T, atol=1e-12, rtol=0):
            raise MatrixError("correlation matrix must be square and symmetric")
        if not np.allclose(np.diag(R), 1.0, atol=1e-12, rtol=0):
            raise MatrixError("correlation matrix must have a unit diagonal")
        if abs(np.linalg.det(R)) < 1e-14:
            raise MatrixError("correlation matrix is singular")
        return cls("gaussian", R=R)

    @classmethod
    def archimedean(cls, lam: float) -> "CopulaSpec":
        if not (math.isfinite(lam) and lam > 0):
            raise DomainError("archimedean index must be positive")
        return cls("archimedean", lam=float(lam))

    @classmethod
    def strong_dependence(cls, lambda_L: float = 1.0) -> "CopulaSpec":
        if not 0 < lambda_L <= 1:
            raise DomainError("lower tail dependence coefficient must lie in (0, 1]")
        return cls("strong_dependence", lambda_L=float(lambda_L))

    @classmethod
    def numeric(cls, evaluator: Callable, n: int = 2, *, log_evaluator: bool = True) -> "CopulaSpec":
        spec = cls("numeric", evaluator=evaluator, log_evaluator=log_evaluator)
        spec._spot_check(n)
        return spec

    def log_cdf(self, u: Sequence[float]) -> float:
        if self.family != "numeric":
            raise DomainError("only numeric copulas can be evaluated")
        val = float(self.evaluator(np.asarray(u, dtype=float)))
        if self.log_evaluator:
            return val
        return math.log(val) if val > 0 else -math.inf

    def _spot_check(self, n: int):
        for u in (0.3, 0.7):
            for k in range(n):
                pt = np.ones(n)
                pt[k] = u
                if not math.isclose(self.log_cdf(pt), math.log(u), rel_tol=1e-6, abs_tol=1e-9):
                    raise DomainError("evaluator fails C(1, ..., u, ..., 1) = u")
                if self.log_cdf(np.where(np.arange(n) == k, 0.0, 0.5)) != -math.inf:
                    raise DomainError("evaluator fails C = 0 on the boundary")

    def chi(self, alpha) -> float:
        alpha = _check_alpha(alpha)
        if self.family == "gaussian":
            return chi_gaussian(self.R, alpha)
        if self.family == "archimedean":
            return chi_archimedean(self.lam, alpha)
        if self.family == "strong_dependence":
            return chi_strong_dependence()
        return chi_numeric(self, alpha)[0]


@dataclass(frozen=True)
class MarginalTailSpec:
    """Left (or right) marginal tails ``log G_i(-k) ~ eta_i log G(-k)``.

    ``G`` is either a positive slope ``c`` meaning ``log G(-k) = -c k`` or a
    callable returning ``log G(-k)`` for ``k > 0``.
    """

    eta: np.ndarray
    G: float | Callable[[float], float] = 1.0
    side: str = "left"

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float, ndmin=1)
        if np.any(eta <= 0) or not np.all(np.isfinite(eta)):
            raise DomainError("tail weights eta must be positive")
        if self.side not in ("left", "right"):
            raise DomainError("side must be 'left' or 'right'")
        if not callable(self.G) and not (self.G > 0):
            raise DomainError("exponential tail slope must be positive")
        object.__setattr__(self, "eta", eta)

    def log_G(self, k: float) -> float:
        if callable(self.G):
            return float(self.G(k))
        return -float(self.G) * k


def _check_alpha(alpha) -> np.ndarray:
    alpha = np.array(alpha, dtype=float, ndmin=1)
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise DomainError("alpha must be positive and finite")
    return alpha


def chi_gaussian(R, alpha) -> float:
    """``max(alpha) min_{w in simplex} w' Sigma w`` with ``Sigma_ij = R_ij / sqrt(alpha_i alpha_j)``."""
    R = np.array(R, dtype=float, ndmin=2)
    alpha = _check_alpha(alpha)
    if R.shape != (alpha.size, alpha.size):
        raise DomainError("R and alpha disagree on the dimension")
    a = alpha / alpha.max()
    sigma = R / np.sqrt(np.outer(a, a))
    return float(min_quadratic_simplex(sigma).value)


def chi_archimedean(lam: float, alpha) -> float:
    """``max(alpha) / (sum alpha_i^(1/lam))^lam``."""
    alpha = _check_alpha(alpha)
    if not lam > 0:
        raise DomainError("archimedean index must be positive")
    a = alpha / alpha.max()
    return float(1.0 / np.sum(a ** (1.0 / lam)) ** lam)


def chi_strong_dependence() -> float:
    return 1.0


def gaussian_copula_logcdf(rho: float) -> Callable[[np.ndarray], float]:
    """``log C`` of the bivariate Gaussian copula, accurate deep in the tail."""
    if not -1.0 < rho < 1.0:
        raise DomainError("rho must lie in (-1, 1)")

    def evaluate(u):
        u1, u2 = float(u[0]), float(u[1])
        if u1 <= 0 or u2 <= 0:
            return -math.inf
        if u1 >= 1:
            return math.log(u2)
        if u2 >= 1:
            return math.log(u1)
        return log_bivariate_normal_cdf(ndtri(u1), ndtri(u2), rho)

    return evaluate


def log_bivariate_normal_cdf(h: float, k: float, rho: float) -> float:
    """``log P[X <= h, Y <= k]`` for standard normals with correlation ``rho``.

    Computed as ``int_{-inf}^h phi(x) Phi((k - rho x) / sqrt(1 - rho^2)) dx``
    with the log-concave integrand rescaled by its maximum.
    """
    s = math.sqrt(1.0 - rho * rho)

    def g(x):
        return -0.5 * x * x - 0.5 * math.log(2.0 * math.pi) + float(log_ndtr((k - rho * x) / s))

    lo = min(h, k) - 40.0
    res = optimize.minimize_scalar(lambda x: -g(x), bounds=(lo, h), method="bounded",
                                   options={"xatol": 1e-10})
    x0 = float(res.x)
    peak = g(x0)
    if g(h) > peak:
        x0, peak = h, g(h)
    f = lambda x: math.exp(g(x) - peak)  # noqa: E731
    left = integrate.quad(f, -math.inf, x0, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    right = integrate.quad(f, x0, h, epsabs=0.0, epsrel=1e-12, limit=200)[0] if h > x0 else 0.0
    return peak + math.log(left + right)


def gumbel_copula_logcdf(theta: float) -> Callable[[np.ndarray], float]:
    """``log C`` of the Gumbel copula with generator ``(-log u)^theta``."""
    if theta < 1:
        raise DomainError("Gumbel parameter must be >= 1")

    def evaluate(u):
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0):
            return -math.inf
        return -float(np.sum((-np.log(u)) ** theta) ** (1.0 / theta))

    return evaluate


def independence_logcdf(u) -> float:
    u = np.asarray(u, dtype=float)
    return -math.inf if np.any(u <= 0) else float(np.sum(np.log(u)))


def comonotone_logcdf(u) -> float:
    m = float(np.min(u))
    return -math.inf if m <= 0 else math.log(m)


@dataclass(frozen=True)
class ChiDiagnostics:
    ladder: tuple[float, ...]
    ratios: tuple[float, ...]
    extrapolated_inverse: float
    slope: float
    converged: bool


def chi_numeric(copula: CopulaSpec, alpha, u_ladder: Sequence[float] = DEFAULT_LADDER) -> tuple[float, ChiDiagnostics]:
    """Estimate ``chi(alpha)`` from a numeric copula on a ladder of ``u``.

    The reciprocal ratio is fitted as ``a + b / log(1/u)`` on the last three
    usable rungs; the estimate is ``1 / a``.
    """
    if copula.family != "numeric":
        raise DomainError("chi_numeric needs a numeric copula")
    alpha = _check_alpha(alpha)
    ladder = np.asarray(u_ladder, dtype=float)
    if ladder.size < 2 or np.any(ladder <= 0) or np.any(ladder > 0.1) or np.any(np.diff(ladder) >= 0):
        raise DomainError("u_ladder must be strictly decreasing inside (0, 0.1]")
    used, ratios = [], []
    for u in ladder:
        log_u = math.log(u)
        lc = copula.log_cdf(np.exp(alpha * log_u))
        if not math.isfinite(lc) or lc >= 0:
            warnings.warn(f"copula evaluator underflowed at u={u:g}; ladder truncated", PrecisionWarning, stacklevel=2)
            break
        used.append(float(u))
        ratios.append(float(alpha.max() * log_u / lc))
    if len(ratios) < 2:
        raise DomainError("fewer than two usable ladder rungs")
    x = 1.0 / -np.log(np.array(used[-3:]))
    y = 1.0 / np.array(ratios[-3:])
    slope, intercept = np.polyfit(x, y, 1)
    estimate = 1.0 / intercept
    increment = abs(estimate - ratios[-1])
    step = abs(ratios[-1] - ratios[-2])
    converged = bool(step <= 10.0 * max(increment, 1e-14 * abs(estimate)))
    diag = ChiDiagnostics(tuple(used), tuple(ratios), float(intercept), float(slope), converged)
    return float(estimate), diag


def _chi_value(chi, eta) -> float:
    if isinstance(chi, CopulaSpec):
        return chi.chi(eta)
    chi = float(chi)
    if not 0 < chi <= 1 + 1e-12:
        raise DomainError("chi must lie in (0, 1]")
    return chi


def tailwing_left_slope(marginals: MarginalTailSpec, chi, k: float) -> float:
    """``psi(-(log G(-k) / k) max(eta) / chi)``, the limit of ``I(-k)^2 T / k``."""
    if not k > 0:
        raise DomainError("log-strike k must be positive")
    eta = marginals.eta
    scale = eta.max()
    chi_v = _chi_value(chi, eta / scale)
    arg = -marginals.log_G(k) / k * scale / chi_v
    if arg < 0:
        raise DomainError("reference tail function must be decreasing (psi argument negative)")
    return psi(arg)


def tailwing_left(marginals: MarginalTailSpec, chi, maturity: float, k: float) -> float:
    """Leading left-wing implied volatility at log-strike ``-k`` from the
    copula's tail dependence and the marginal tails."""
    if not maturity > 0:
        raise DomainError("maturity must be positive")
    return math.sqrt(k / maturity * tailwing_left_slope(marginals, chi, k))


def tailwing_right(marginal_slopes, maturity: float, k: float) -> float:
    """Leading right-wing implied volatility at log-strike ``k``.

    ``marginal_slopes`` are the exponential rates ``-log Gbar_i(k) / k`` of the
    marginal right tails.  The fattest tail wins and the copula plays no role.
    A call sees the moment index ``slope - 1``, hence ``psi(min slope - 1)``.
    """
    slopes = np.array(marginal_slopes, dtype=float, ndmin=1)
    if np.any(slopes <= 0) or not np.all(np.isfinite(slopes)):
        raise DomainError("right-tail slopes must be positive")
    if not maturity > 0 or not k > 0:
        raise DomainError("maturity and k must be positive")
    index = float(slopes.min()) - 1.0
    if index < 0:
        raise DomainError("slowest right-tail slope must exceed 1 (finite first moment)")
    return math.sqrt(k / maturity * psi(index))


def nig_slope(R, alpha, beta) -> float:
    """Left-wing implied variance slope ``lim I(-k)^2 T / k`` for NIG
    marginals glued by a Gaussian copula.

    An NIG density decays like ``exp(-(alpha + beta)|k|)`` as ``k -> -inf``,
    so the marginal left-tail weights are ``alpha_i + beta_i``.
    """
    R = np.array(R, dtype=float, ndmin=2)
    alpha = np.array(alpha, dtype=float, ndmin=1)
    beta = np.array(beta, dtype=float, ndmin=1)
    if alpha.shape != beta.shape or R.shape != (alpha.size, alpha.size):
        raise DomainError("R, alpha and beta disagree on the dimension")
    if not np.all(alpha > np.abs(beta)) or not np.all(np.abs(beta) > 0):
        raise DomainError("NIG parameters need alpha > |beta| > 0")
    eta = alpha + beta
    sigma = R / np.sqrt(np.outer(eta, eta))
    return psi(1.0 / min_quadratic_simplex(sigma).value)
