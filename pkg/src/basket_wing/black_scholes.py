"""Single-asset Black-Scholes pricing at zero interest rate, implied volatility
inversion, the tail-wing map ``psi`` and the two model-free small-strike
implied volatility formulas.

Deep-wing option prices underflow double precision long before the implied
volatility stops being well defined (a put struck at ``exp(-40)`` on a 20%
asset is worth roughly ``exp(-20000)``).  Every pricing routine therefore has a
log-space counterpart, and the inversion works on log prices throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.special import erfcx, log_ndtr, ndtr

from .errors import ArbitrageError, BoundaryError, DomainError

Kind = Literal["call", "put"]

PRICE_TOL = 1e-12
VOL_TOL = 1e-10
VOL_LO = 1e-9
VOL_HI = 10.0

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
# (2j-1)!! for the asymptotic series of 1 - x R(x), R the Mills ratio
_DOUBLE_FACTORIALS = (1.0, 3.0, 15.0, 105.0, 945.0, 10395.0, 135135.0, 2027025.0)


@dataclass(frozen=True)
class OptionQuote:
    spot: float
    strike: float
    maturity: float
    price: float
    kind: Kind = "put"

    def __post_init__(self):
        for name in ("spot", "strike", "maturity", "price"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.spot <= 0 or self.strike <= 0 or self.maturity <= 0:
            raise DomainError("spot, strike and maturity must be positive")
        if self.kind not in ("call", "put"):
            raise DomainError(f"kind must be 'call' or 'put', got {self.kind!r}")
        lower, upper = self.bounds()
        if self.price < lower or self.price > upper:
            raise ArbitrageError(
                f"{self.kind} price {self.price!r} outside no-arbitrage bounds [{lower!r}, {upper!r}]"
            )

    def bounds(self) -> tuple[float, float]:
        if self.kind == "put":
            return max(self.strike - self.spot, 0.0), self.strike
        return max(self.spot - self.strike, 0.0), self.spot


@dataclass(frozen=True)
class PsiValue:
    """``psi(u)`` together with its argument; both algebraic forms are checked
    to agree on construction."""

    u: float
    value: float

    @classmethod
    def of(cls, u: float) -> "PsiValue":
        direct, rational = psi_forms(u)
        if not math.isclose(direct, rational, rel_tol=1e-12, abs_tol=0.0) and u <= 1e4:
            raise ArithmeticError(f"psi forms disagree at u={u}: {direct} vs {rational}")
        return cls(u=float(u), value=float(psi(u)))


def _check_finite(**values):
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise DomainError(f"{name} must be finite")


def bs_price(spot, strike, vol, maturity, kind: Kind = "call"):
    """Black-Scholes price with zero rates.  Vectorises over numpy inputs.

    ``vol = 0`` gives the intrinsic value, ``strike = 0`` the degenerate limit
    (call worth the spot, put worth nothing).
    """
    spot, strike, vol, maturity = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (spot, strike, vol, maturity))
    )
    _check_finite(spot=spot, strike=strike, vol=vol, maturity=maturity)
    if np.any(spot <= 0) or np.any(strike < 0) or np.any(maturity <= 0) or np.any(vol < 0):
        raise DomainError("need spot > 0, strike >= 0, maturity > 0, vol >= 0")
    if kind not in ("call", "put"):
        raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")
    sd = vol * np.sqrt(maturity)
    live = (sd > 0) & (strike > 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d1 = np.where(live, (np.log(spot / np.where(live, strike, 1.0)) + 0.5 * sd**2) / np.where(live, sd, 1.0), 0.0)
    d2 = d1 - sd
    if kind == "call":
        price = np.where(live, spot * ndtr(d1) - strike * ndtr(d2), np.maximum(spot - strike, 0.0))
    else:
        price = np.where(live, strike * ndtr(-d2) - spot * ndtr(-d1), np.maximum(strike - spot, 0.0))
    price = np.maximum(price, 0.0)
    return float(price) if price.ndim == 0 else price


def _one_minus_x_mills(x):
    """``1 - x R(x)`` with ``R(x) = Phi(-x) / phi(x)``; positive for all x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 30.0
    xs = x[small]
    out[small] = 1.0 - xs * _SQRT_HALF_PI * erfcx(xs / math.sqrt(2.0))
    xl = x[~small]
    if xl.size:
        inv2 = 1.0 / (xl * xl)
        acc = np.zeros_like(xl)
        term = np.ones_like(xl)
        for j, df in enumerate(_DOUBLE_FACTORIALS):
            term = term * inv2
            acc += (-1.0) ** j * df * term
        out[~small] = acc
    return out


def log_put_forward(log_fwd, log_strike, sd):
    """Log of the undiscounted put ``E[(K - F exp(sd Z - sd^2/2))^+]``.

    Accurate to a few ulps of the *log* price even when the price itself
    underflows.  For an out-of-the-money put the Mills-ratio form
    ``K phi(d2) (R(d2) - R(d1))`` avoids the cancellation of the textbook
    formula.
    """
    log_fwd, log_strike, sd = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (log_fwd, log_strike, sd))
    )
    out = np.full(log_fwd.shape, -np.inf)
    zero = sd <= 0
    if np.any(zero):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            intrinsic = np.exp(log_strike[zero]) - np.exp(log_fwd[zero])
            out[zero] = np.where(intrinsic > 0, np.log(np.where(intrinsic > 0, intrinsic, 1.0)), -np.inf)
    live = ~zero
    if not np.any(live):
        return float(out) if out.ndim == 0 else out
    lf, lk, s = log_fwd[live], log_strike[live], sd[live]
    d1 = (lf - lk) / s + 0.5 * s
    d2 = d1 - s
    res = np.empty_like(lf)
    otm = d2 > 0
    if np.any(otm):
        a, b, so = d2[otm], d1[otm], s[otm]
        ra = _SQRT_HALF_PI * erfcx(a / math.sqrt(2.0))
        rb = _SQRT_HALF_PI * erfcx(b / math.sqrt(2.0))
        rel = 1.0 - rb / ra
        diff = ra - rb
        tight = rel < 1e-6
        if np.any(tight):
            mid = 0.5 * (a[tight] + b[tight])
            diff[tight] = so[tight] * _one_minus_x_mills(mid)
        res[otm] = lk[otm] - 0.5 * a * a - _LOG_SQRT_2PI + np.log(diff)
    itm = ~otm
    if np.any(itm):
        la = lk[itm] + log_ndtr(-d2[itm])
        lb = lf[itm] + log_ndtr(-d1[itm])
        with np.errstate(divide="ignore"):
            res[itm] = la + np.log1p(-np.exp(lb - la))
    out[live] = res
    return float(out) if out.ndim == 0 else out


def _log_put_scalar(lf: float, lk: float, s: float) -> float:
    """Scalar twin of :func:`log_put_forward` for ``s > 0`` (inner loops)."""
    d1 = (lf - lk) / s + 0.5 * s
    d2 = d1 - s
    if d2 > 0:
        ra = _SQRT_HALF_PI * float(erfcx(d2 / math.sqrt(2.0)))
        rb = _SQRT_HALF_PI * float(erfcx(d1 / math.sqrt(2.0)))
        diff = ra - rb
        if 1.0 - rb / ra < 1e-6:
            diff = s * float(_one_minus_x_mills(np.array([0.5 * (d1 + d2)]))[0])
        return lk - 0.5 * d2 * d2 - _LOG_SQRT_2PI + math.log(diff)
    la = lk + float(log_ndtr(-d2))
    lb = lf + float(log_ndtr(-d1))
    gap = -math.expm1(lb - la)
    return la + math.log(gap) if gap > 0 else -math.inf


def bs_log_price(spot, strike, vol, maturity, kind: Kind = "call"):
    """Log of :func:`bs_price`, valid far beyond the underflow threshold."""
    spot, strike, vol, maturity = (np.asarray(x, dtype=float) for x in (spot, strike, vol, maturity))
    _check_finite(spot=spot, strike=strike, vol=vol, maturity=maturity)
    if np.any(spot <= 0) or np.any(strike <= 0) or np.any(maturity <= 0) or np.any(vol < 0):
        raise DomainError("need spot, strike, maturity > 0 and vol >= 0")
    sd = vol * np.sqrt(maturity)
    if kind == "put":
        return log_put_forward(np.log(spot), np.log(strike), sd)
    if kind == "call":
        # C(F, K) = P(F' = K, K' = F)
        return log_put_forward(np.log(strike), np.log(spot), sd)
    raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")


def _log_vega_over_price(spot, strike, vol, maturity, kind, log_price):
    sd = vol * math.sqrt(maturity)
    d1 = (math.log(spot / strike) + 0.5 * sd * sd) / sd
    log_vega = math.log(spot) - 0.5 * d1 * d1 - _LOG_SQRT_2PI + 0.5 * math.log(maturity)
    return math.exp(log_vega - log_price)


def implied_vol_from_log_price(log_price: float, spot: float, strike: float, maturity: float, kind: Kind) -> float:
    """Invert :func:`bs_log_price` for the volatility.

    The price must be the *time value carrying* side, i.e. any positive put or
    call price; log prices below the intrinsic value or above the upper bound
    raise.  Bisection on ``[VOL_LO, VOL_HI]`` guarantees a bracket, Newton
    steps on the log price finish the job.
    """
    if not math.isfinite(log_price):
        raise BoundaryError("log price must be finite (zero price has no implied volatility)")

    for name, value in (("spot", spot), ("strike", strike), ("maturity", maturity)):
        if not (math.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be positive and finite")
    if kind not in ("call", "put"):
        raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")
    ls, lk, sqrt_t = math.log(spot), math.log(strike), math.sqrt(maturity)

    def g(sig):
        if kind == "put":
            return _log_put_scalar(ls, lk, sig * sqrt_t) - log_price
        return _log_put_scalar(lk, ls, sig * sqrt_t) - log_price

    g_lo, g_hi = g(VOL_LO), g(VOL_HI)
    if g_lo > 0:
        if g_lo <= 1e-14 * max(1.0, abs(log_price)):
            raise BoundaryError("price equals intrinsic value (implied volatility 0)")
        raise ArbitrageError("price below intrinsic value")
    if g_hi < 0:
        raise BoundaryError(f"price implies volatility above {VOL_HI} (at the upper no-arbitrage bound)")
    lo, hi = VOL_LO, VOL_HI
    # a few bisection steps in log-vol put Newton inside its basin
    for _ in range(12):
        mid = math.sqrt(lo * hi)
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    sig = math.sqrt(lo * hi)
    for _ in range(200):
        val = g(sig)
        if val == 0.0:
            return sig
        if val > 0:
            hi = sig
        else:
            lo = sig
        slope = _log_vega_over_price(spot, strike, sig, maturity, kind, val + log_price)
        step = val / slope if slope > 1e-12 and math.isfinite(slope) else math.inf
        cand = sig - step
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if abs(cand - sig) <= 1e-15 * max(1.0, sig) or hi - lo <= 1e-15 * max(1.0, sig):
            return cand
        sig = cand
    if hi - lo > VOL_TOL:
        raise ArithmeticError("implied volatility iteration did not converge")
    return sig


def implied_vol(quote: OptionQuote) -> float:
    """Black-Scholes implied volatility of a quote (zero rates).

    In-the-money quotes are mapped to the out-of-the-money side by put-call
    parity before inversion, so the time value drives the solve.
    """
    lower, upper = quote.bounds()
    if quote.price >= upper:
        raise BoundaryError("price at the upper no-arbitrage bound (infinite implied volatility)")
    time_value = quote.price - lower
    if time_value <= 0:
        raise BoundaryError("price equals intrinsic value (implied volatility 0)")
    s, k = quote.spot, quote.strike
    if quote.kind == "put":
        kind: Kind = "put" if k <= s else "call"
    else:
        kind = "call" if k >= s else "put"
    # the OTM price equals the time value of either side
    return implied_vol_from_log_price(math.log(time_value), s, k, quote.maturity, kind)


def psi(u):
    """``psi(u) = 2 - 4 (sqrt(u^2 + u) - u)``, evaluated without cancellation.

    Decreasing from ``psi(0) = 2`` to 0; vectorises over arrays.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(np.isnan(u)):
        raise DomainError("psi is defined for u >= 0")
    with np.errstate(invalid="ignore", over="ignore"):
        direct = 2.0 - 4.0 * (np.sqrt(u * u + u) - u)
        rational = 2.0 / (np.sqrt(u + 1.0) + np.sqrt(u)) ** 2
    out = np.where(u > 1.0, rational, direct)
    return float(out) if out.ndim == 0 else out


def psi_forms(u: float) -> tuple[float, float]:
    """Both algebraic forms of ``psi`` (direct and rational), unselected."""
    if u < 0:
        raise DomainError("psi is defined for u >= 0")
    return 2.0 - 4.0 * (math.sqrt(u * u + u) - u), 2.0 / (math.sqrt(u + 1.0) + math.sqrt(u)) ** 2


PutFunction = Callable[[float], float]


def _log_put_terms(put: PutFunction, strike: float, log_space: bool) -> tuple[float, float, float]:
    if strike <= 0 or not math.isfinite(strike):
        raise DomainError("strike must be positive and finite")
    value = float(put(strike))
    if log_space:
        log_p = value
    else:
        if not value > 0:
            raise DomainError("put value must be positive")
        log_p = math.log(value)
    log_k = math.log(strike)
    if not log_p < log_k:
        raise DomainError("put value must be below the strike")
    log_inv_p = -log_p
    log_k_over_p = log_k - log_p
    if not log_k_over_p > 1.0:
        raise DomainError("need log(K / P(K)) > 1 for the iterated logarithm")
    return log_inv_p, log_k_over_p, -log_k


def _sqrt_gap(x: float, y: float, gap: float) -> float:
    # sqrt(x) - sqrt(y) where x - y = gap, without cancellation
    if x <= 0 or y <= 0:
        raise DomainError("square-root arguments must be positive")
    return gap / (math.sqrt(x) + math.sqrt(y))


def iv_zero_order(put: PutFunction, strike: float, maturity: float, *, log_space: bool = False) -> float:
    """Zero-order small-strike implied volatility from a put envelope.

    ``put`` maps a strike to a positive function comparable to the put price
    (any envelope within constant factors works); with ``log_space=True`` it
    returns the log of that value instead.  The initial asset price is 1.
    """
    if maturity <= 0:
        raise DomainError("maturity must be positive")
    a, b, k = _log_put_terms(put, strike, log_space)
    half_loglog = 0.5 * math.log(b)
    x, y = a - half_loglog, b - half_loglog
    return math.sqrt(2.0 / maturity) * _sqrt_gap(x, y, k)


def log_b_factor(put: PutFunction, strike: float, *, log_space: bool = False) -> float:
    """Log of the first-order correction factor ``B(K)``."""
    a, b, k = _log_put_terms(put, strike, log_space)
    return math.log(_sqrt_gap(a, b, k)) - math.log(2.0 * math.sqrt(math.pi) * math.sqrt(a))


def iv_first_order(put: PutFunction, strike: float, maturity: float, *, log_space: bool = False) -> float:
    """First-order small-strike implied volatility; ``put`` must be the put
    price itself (or its log with ``log_space=True``), not an envelope."""
    if maturity <= 0:
        raise DomainError("maturity must be positive")
    a, b, k = _log_put_terms(put, strike, log_space)
    log_b = math.log(_sqrt_gap(a, b, k)) - math.log(2.0 * math.sqrt(math.pi) * math.sqrt(a))
    half_loglog = 0.5 * math.log(b)
    x, y = a - half_loglog + log_b, b - half_loglog + log_b
    return math.sqrt(2.0 / maturity) * _sqrt_gap(x, y, k)
