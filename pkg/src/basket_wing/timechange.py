"""Time-changed multidimensional Black-Scholes baskets.

Asset ``i`` has log price ``log(lambda_i) + mu_tilde_i + mu_i tau_T + (B^{1/2} W_{tau_T})_i``
where ``tau`` is a subordinator independent of ``W``.  The law of ``tau_T``
must have an exponential tail ``rho_T(s) ~ s^alpha exp(-theta s)``; the left
wing of the basket smile is then governed by the saddle constant ``c*`` and
the right wing by the fattest single-asset tail.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .black_scholes import psi
from .errors import DomainError, InsufficientPathsWarning, MomentError
from .lognormal_asymptotics import BasketSpec
from .simplex_opt import saddle_cstar, validate_cov

NORMALISATION_TOL = 1e-6
SANDWICH_GRID = np.linspace(1.0, 50.0, 99)


@dataclass(frozen=True)
class TimeChangeSpec:
    """Law of ``tau_T``.

    ``family`` is ``"gamma"`` or ``"inverse_gaussian"`` (parameters ``c`` and
    ``rate``) or ``"tabulated"`` (a density sampled on ``grid``, with declared
    tail parameters).  Use the classmethods to build one.
    """

    family: str
    maturity: float
    c: float | None = None
    rate: float | None = None
    grid: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)
    tail_theta: float | None = None
    tail_alpha: float | None = None
    tail_c: float | None = None

    @classmethod
    def gamma(cls, c: float, rate: float, maturity: float = 1.0) -> "TimeChangeSpec":
        _positive(c=c, rate=rate, maturity=maturity)
        return cls("gamma", float(maturity), c=float(c), rate=float(rate))

    @classmethod
    def inverse_gaussian(cls, c: float, rate: float, maturity: float = 1.0) -> "TimeChangeSpec":
        _positive(c=c, rate=rate, maturity=maturity)
        return cls("inverse_gaussian", float(maturity), c=float(c), rate=float(rate))

    @classmethod
    def tabulated(cls, grid, values, theta: float, alpha: float, c: float = 1.0, maturity: float = 1.0,
                  *, check: bool = True) -> "TimeChangeSpec":
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 3:
            raise DomainError("grid and values must be 1-D arrays of equal length >= 3")
        if np.any(np.diff(grid) <= 0) or grid[0] < 0:
            raise DomainError("grid must be nonnegative and strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("density values must be finite and nonnegative")
        _positive(theta=theta, maturity=maturity)
        spec = cls("tabulated", float(maturity), grid=grid, values=values,
                   tail_theta=float(theta), tail_alpha=float(alpha), tail_c=float(c))
        if check:
            spec.validate()
        return spec

    def __post_init__(self):
        if self.family not in ("gamma", "inverse_gaussian", "tabulated"):
            raise DomainError(f"unknown time-change family {self.family!r}")

    # tail parameters -------------------------------------------------------
    @property
    def theta(self) -> float:
        return self.rate if self.family != "tabulated" else self.tail_theta

    @property
    def alpha(self) -> float:
        if self.family == "gamma":
            return self.c * self.maturity - 1.0
        if self.family == "inverse_gaussian":
            return -1.5
        return self.tail_alpha

    @property
    def ig_mean(self) -> float:
        return self.c * self.maturity * math.sqrt(math.pi / self.rate)

    @property
    def ig_shape(self) -> float:
        return 2.0 * math.pi * (self.c * self.maturity) ** 2

    def mean(self) -> float:
        if self.family == "gamma":
            return self.c * self.maturity / self.rate
        if self.family == "inverse_gaussian":
            return self.ig_mean
        return float(integrate.trapezoid(self.grid * self.values, self.grid) / self._mass())

    # density and transforms -------------------------------------------------
    def log_pdf(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, -np.inf)
        pos = s > 0
        sp = s[pos]
        if self.family == "gamma":
            a = self.c * self.maturity
            out[pos] = a * math.log(self.rate) - special.gammaln(a) + (a - 1.0) * np.log(sp) - self.rate * sp
        elif self.family == "inverse_gaussian":
            ct = self.c * self.maturity
            out[pos] = (math.log(ct) - 1.5 * np.log(sp) + 2.0 * ct * math.sqrt(math.pi * self.rate)
                        - self.rate * sp - math.pi * ct * ct / sp)
        else:
            vals = np.interp(sp, self.grid, self.values, left=0.0, right=0.0) / self._mass()
            with np.errstate(divide="ignore"):
                out[pos] = np.log(vals)
        return float(out) if out.ndim == 0 else out

    def pdf(self, s):
        return np.exp(self.log_pdf(s))

    def _mass(self) -> float:
        return float(integrate.trapezoid(self.values, self.grid))

    def laplace(self, s: float) -> float:
        """``E[exp(-s tau_T)]``."""
        if not math.isfinite(s):
            raise DomainError("s must be finite")
        if s <= -self.theta:
            raise DomainError(f"Laplace transform diverges for s <= -theta = {-self.theta}")
        if self.family == "gamma":
            return (self.rate / (self.rate + s)) ** (self.c * self.maturity)
        if self.family == "inverse_gaussian":
            ct = self.c * self.maturity
            return math.exp(2.0 * ct * math.sqrt(math.pi * self.rate) - 2.0 * ct * math.sqrt(math.pi * (self.rate + s)))
        return math.exp(self._log_tabulated_laplace(s))

    def _log_tabulated_laplace(self, s: float) -> float:
        with np.errstate(divide="ignore"):
            log_f = -s * self.grid + np.log(self.values)
        peak = np.max(log_f)
        keep = log_f >= peak + math.log(1e-16)
        last = int(np.flatnonzero(keep)[-1]) + 1
        g, f = self.grid[:last], np.exp(log_f[:last] - peak)
        if g.size < 3:
            g, f = self.grid, np.exp(log_f - peak)
        # same rule as the normalising mass, so laplace(0) == 1
        val = integrate.trapezoid(f, g)
        return math.log(val) + peak - math.log(self._mass())

    def tilted(self, s: float) -> "TimeChangeSpec":
        """Esscher transform: density proportional to ``exp(s tau) rho(tau)``."""
        if s >= self.theta:
            raise DomainError("tilt must stay below theta")
        if self.family in ("gamma", "inverse_gaussian"):
            return TimeChangeSpec(self.family, self.maturity, c=self.c, rate=self.rate - s)
        with np.errstate(divide="ignore"):
            log_v = s * self.grid + np.log(self.values)
        vals = np.exp(log_v - np.max(log_v))
        return TimeChangeSpec.tabulated(self.grid, vals, self.tail_theta - s, self.tail_alpha, self.tail_c,
                                        self.maturity, check=False)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "gamma":
            return rng.gamma(self.c * self.maturity, 1.0 / self.rate, size)
        if self.family == "inverse_gaussian":
            # numpy's Wald sampler is the two-root transform method
            return rng.wald(self.ig_mean, self.ig_shape, size)
        cdf = integrate.cumulative_trapezoid(self.values, self.grid, initial=0.0)
        cdf /= cdf[-1]
        u = rng.random(size)
        return np.interp(u, cdf, self.grid)

    def validate(self) -> None:
        """Check normalisation and the exponential tail sandwich on ``[1, 50]``."""
        if self.family == "tabulated":
            mass = self._mass()
            if abs(mass - 1.0) > NORMALISATION_TOL:
                raise DomainError(f"tabulated density integrates to {mass}, not 1")
            if self.grid[-1] < SANDWICH_GRID[-1]:
                raise DomainError("tabulated density must cover s in [1, 50] to check the tail")
        else:
            lo = 0.0
            hi = self.mean() * 50.0 + 100.0
            mass = integrate.quad(self.pdf, lo, hi, limit=400, points=[self.mean()])[0]
            if abs(mass - 1.0) > NORMALISATION_TOL:
                raise DomainError(f"density integrates to {mass}, not 1")
        ratio = self.log_pdf(SANDWICH_GRID) - self.alpha * np.log(SANDWICH_GRID) + self.theta * SANDWICH_GRID
        if not np.all(np.isfinite(ratio)):
            raise DomainError("density vanishes on the tail grid; the exponential tail condition fails")
        if ratio.max() - ratio.min() > math.log(1e3):
            raise DomainError("density is not squeezed between c1 s^alpha e^(-theta s) and c2 s^alpha e^(-theta s)")
        half = SANDWICH_GRID >= 25.0
        drift = np.polyfit(SANDWICH_GRID[half], ratio[half], 1)[0]
        if abs(drift) > 1e-2:
            raise DomainError(f"declared theta does not match the tail (residual exponential rate {drift:.3g})")


def _positive(**values):
    for name, value in values.items():
        if not (math.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be positive and finite, got {value!r}")


def laplace_transform(tc: TimeChangeSpec, s: float) -> float:
    return tc.laplace(s)


def martingale_drift(tc: TimeChangeSpec, mu_i: float, var_ii: float) -> float:
    """Compensator making ``exp(mu_tilde + mu tau + sqrt(var tau) Z)`` unit mean."""
    if var_ii <= 0:
        raise DomainError("variance must be positive")
    rate = mu_i + 0.5 * var_ii
    if not tc.theta > rate:
        raise MomentError(f"moment condition theta > mu_i + var_ii/2 fails ({tc.theta} <= {rate})")
    if rate == 0.0:
        return 0.0
    return -math.log(tc.laplace(-rate))


@dataclass(frozen=True)
class TcBasketSpec:
    weights: np.ndarray
    cov: np.ndarray
    mu: np.ndarray
    timechange: TimeChangeSpec
    mu_tilde: np.ndarray = field(init=False)

    def __post_init__(self):
        lam = np.array(self.weights, dtype=float, ndmin=1)
        if np.any(lam <= 0) or abs(lam.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be positive and sum to 1")
        cov = validate_cov(self.cov)
        mu = np.array(self.mu, dtype=float, ndmin=1)
        if cov.shape[0] != lam.size or mu.size != lam.size:
            raise DomainError("weights, cov and mu disagree on the number of assets")
        mu_t = np.array([martingale_drift(self.timechange, m, b) for m, b in zip(mu, np.diag(cov))])
        object.__setattr__(self, "weights", lam)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "mu_tilde", mu_t)
        for i in range(lam.size):
            mean = math.exp(mu_t[i]) * self.timechange.laplace(-(mu[i] + 0.5 * cov[i, i]))
            if abs(mean - 1.0) > 1e-8:
                raise MomentError(f"asset {i} is not a martingale under the computed compensator")

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def maturity(self) -> float:
        return self.timechange.maturity

    @classmethod
    def from_basket(cls, basket: BasketSpec, mu, timechange: TimeChangeSpec) -> "TcBasketSpec":
        return cls(basket.weights, basket.cov, mu, timechange)

    def asset_slopes(self) -> np.ndarray:
        """Right-tail decay rates ``c_i`` of the individual log prices."""
        b = np.diag(self.cov)
        return (np.sqrt(2.0 * self.timechange.theta * b + self.mu**2) - self.mu) / b


def tc_leftwing_leading(spec: TcBasketSpec) -> tuple[float, float]:
    """``(sqrt(psi(c*) / T), c*)``: small-strike implied volatility grows like
    the coefficient times ``sqrt(log(1/K))``."""
    c_star = saddle_cstar(spec.cov, spec.mu, spec.timechange.theta).c_star
    return math.sqrt(psi(c_star) / spec.maturity), c_star


def tc_rightwing_leading(spec: TcBasketSpec) -> tuple[float, float]:
    """``(sqrt(psi(c_min - 1) / T), c_min)``: large-strike implied volatility
    grows like the coefficient times ``sqrt(log K)``.

    ``c_min`` is the smallest single-asset right-tail rate; the call wing sees
    the moment index ``c_min - 1`` (positive under the moment condition).
    """
    c_min = float(spec.asset_slopes().min())
    return math.sqrt(psi(c_min - 1.0) / spec.maturity), c_min


@dataclass(frozen=True)
class SandwichEntry:
    k: float
    log_prob: float | None
    std_error: float | None
    slope: float | None
    usable: bool


@dataclass(frozen=True)
class SandwichReport:
    c_star: float
    alpha: float
    n: int
    entries: tuple[SandwichEntry, ...]
    fitted_slope: float | None
    fitted_log_power: float | None
    band: tuple[float, float]
    band_ok: bool | None
    seed: int
    paths: int

    def slope_errors(self) -> list[float | None]:
        return [None if e.slope is None else abs(e.slope / self.c_star - 1.0) for e in self.entries]


def tail_sandwich_check(spec: TcBasketSpec, k_grid, mc_paths: int, seed: int,
                        tail_estimator: Callable | None = None) -> SandwichReport:
    """Compare Monte Carlo left-tail probabilities with the two-sided bound
    ``k^(alpha-n) e^(-c* k) <~ P[S <= e^-k] <~ k^alpha e^(-c* k)``.

    The per-``k`` slope is ``-log P / k``.  With three or more usable points
    the residual ``-log P - c* k`` is fitted to ``a - beta log k`` and
    ``beta`` is compared with the band ``[alpha - n, alpha]``.
    """
    if tail_estimator is None:
        from .oracle import mc_timechanged_tail as tail_estimator
    spec.timechange.validate()
    k_grid = [float(k) for k in k_grid]
    if any(k < 5 for k in k_grid):
        raise DomainError("tail check needs k >= 5")
    _, c_star = tc_leftwing_leading(spec)
    entries = []
    for k in k_grid:
        est = tail_estimator(spec, k, mc_paths, seed)
        if est.value <= 0:
            warnings.warn(f"no tail hits at k={k}; entry marked unusable", InsufficientPathsWarning, stacklevel=2)
            entries.append(SandwichEntry(k, None, None, None, False))
            continue
        lp = math.log(est.value)
        entries.append(SandwichEntry(k, lp, est.std_error / est.value, -lp / k, True))
    usable = [e for e in entries if e.usable]
    fitted_slope = fitted_power = band_ok = None
    alpha, n = spec.timechange.alpha, spec.n
    if len(usable) >= 2:
        ks = np.array([e.k for e in usable])
        nl = -np.array([e.log_prob for e in usable])
        fitted_slope = float(np.polyfit(ks, nl, 1)[0])
    if len(usable) >= 3:
        resid = nl - c_star * ks
        design = np.column_stack([np.ones_like(ks), -np.log(ks)])
        coef = np.linalg.lstsq(design, resid, rcond=None)[0]
        fitted_power = float(coef[1])
        band_ok = bool(alpha - n - 0.5 <= fitted_power <= alpha + 0.5)
    return SandwichReport(c_star, alpha, n, tuple(entries), fitted_slope, fitted_power,
                          (alpha - n, alpha), band_ok, int(seed), int(mc_paths))
