"""Numerical ground truth for the asymptotic formulas.

Two independent pricers:

* Monte Carlo over fixed-size blocks of ``2**16`` paths.  Each block draws
  from its own Philox stream spawned from the master seed, blocks may run on
  several threads, and partial results are merged in block order, so an
  estimate depends only on ``(seed, paths)``.  Gaussian draws are antithetic.
  Deep tails use a mean shift (plain baskets) or an Esscher tilt of the
  subordinator and the Gaussian driver (time-changed baskets).
* Deterministic quadrature for one and two assets.  Conditioning on the first
  Gaussian factor leaves a closed-form log-space Black-Scholes price for the
  second asset, so only a 1-D integral remains.  It is evaluated in log space
  with Gauss-Legendre panels placed where the log-integrand is within 60 of
  its peak, which keeps full relative accuracy at strikes where the price
  itself underflows.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal

import numpy as np
from scipy import optimize
from scipy.special import log_ndtr, logsumexp

from .black_scholes import implied_vol_from_log_price, log_put_forward
from .errors import BasketWingError, DomainError, PrecisionWarning
from .lognormal_asymptotics import BasketSpec
from .simplex_opt import min_quadratic_simplex, saddle_cstar
from .timechange import TcBasketSpec, TimeChangeSpec

BLOCK_SIZE = 2**16
LOG_WINDOW = 60.0
SCAN_POINTS = 4000
QUAD_PANELS = 4
NODES_MIN, NODES_MAX = 50, 400
DOUBLING_RTOL = 1e-6
NOISE_FLOOR = 10.0
TILT_MIN_LOG_STRIKE = 0.25

Kind = Literal["call", "put"]


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    paths: int
    seed: int


@dataclass(frozen=True)
class IvCurvePoint:
    k: float
    strike: float
    price: float
    iv: float | None
    source: str
    usable: bool = True
    note: str = ""


@dataclass(frozen=True)
class PriceQuote:
    """A price in log space with its absolute Monte Carlo noise (0 for quadrature)."""

    log_price: float
    noise: float
    source: str


# --------------------------------------------------------------------------
# block-parallel Monte Carlo machinery


def thread_count() -> int:
    raw = os.environ.get("BASKET_WING_THREADS", "")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise DomainError(f"BASKET_WING_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def _block_sizes(paths: int) -> list[int]:
    if paths < 2 or paths % 2:
        raise DomainError("paths must be an even number >= 2 (antithetic pairs)")
    full, rest = divmod(paths, BLOCK_SIZE)
    sizes = [BLOCK_SIZE] * full
    if rest:
        sizes.append(rest)
    return sizes


def _run_blocks(paths: int, seed: int, block_fn: Callable[[np.random.Generator, int], np.ndarray]) -> list:
    """Apply ``block_fn(rng, n_pairs)`` to every block; results in block order."""
    sizes = _block_sizes(paths)
    children = np.random.SeedSequence(int(seed)).spawn(len(sizes))

    def job(i):
        rng = np.random.Generator(np.random.Philox(children[i]))
        return block_fn(rng, sizes[i] // 2)

    workers = min(thread_count(), len(sizes))
    if workers <= 1:
        return [job(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(len(sizes))))


def _merge_stats(blocks) -> tuple[np.ndarray, np.ndarray, int]:
    """Chan-style merge of per-block ``(count, mean, M2)`` in block order."""
    n_tot, mean, m2 = 0, None, None
    for n, mu, s2 in blocks:
        if mean is None:
            n_tot, mean, m2 = n, mu.copy(), s2.copy()
            continue
        delta = mu - mean
        new_n = n_tot + n
        mean = mean + delta * (n / new_n)
        m2 = m2 + s2 + delta**2 * (n_tot * n / new_n)
        n_tot = new_n
    return mean, m2, n_tot


def _block_stats(values: np.ndarray):
    """Per-column ``(count, mean, M2)`` of pair-averaged samples ``values[pairs, m]``."""
    mu = values.mean(axis=0)
    return values.shape[0], mu, ((values - mu) ** 2).sum(axis=0)


def _estimates(blocks, paths: int, seed: int) -> list[McEstimate]:
    mean, m2, n_pairs = _merge_stats(blocks)
    var = m2 / max(n_pairs - 1, 1)
    se = np.sqrt(var / n_pairs)
    return [McEstimate(float(m), float(s), int(paths), int(seed)) for m, s in zip(mean, se)]


# --------------------------------------------------------------------------
# plain multidimensional Black-Scholes basket


def tail_shift(basket: BasketSpec, strike: float, kind: Kind = "put") -> np.ndarray:
    """Mean shift of the Gaussian driver moving the basket toward the strike.

    Left wing: along ``B^{1/2} w_bar`` so that ``w_bar' Y`` is centred at
    ``log K``.  Right wing: along the dominant asset's row of ``B^{1/2}``.
    """
    T = basket.maturity
    k = math.log(strike)
    if kind == "put":
        w = min_quadratic_simplex(basket.cov).w_bar
    else:
        diag = np.diag(basket.cov)
        j = int(np.argmax(diag + 1e-300 * basket.mu_T))
        w = np.zeros(basket.n)
        w[j] = 1.0
    direction = basket.sqrt_cov @ w
    v = float(w @ basket.cov @ w)
    a = (k - float(w @ basket.mu_T)) / (math.sqrt(T) * v)
    return a * direction


def _basket_block(basket: BasketSpec, strikes: np.ndarray, kind: Kind, shift, scale):
    n = basket.n
    sqrt_T = math.sqrt(basket.maturity)
    root_t = basket.sqrt_cov.T * sqrt_T
    shift = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)
    half_norm = 0.5 * float(shift @ shift)

    def run(rng, n_pairs, want_assets=False):
        eps = rng.standard_normal((n_pairs, n))
        out = []
        for sign in (1.0, -1.0):
            x = shift + sign * eps
            assets = np.exp(basket.mu_T + x @ root_t)
            if scale is not None:
                assets = assets * scale
            lr = np.exp(half_norm - x @ shift)
            if want_assets:
                out.append(assets * lr[:, None])
                continue
            s = assets.sum(axis=1)[:, None]
            payoff = np.maximum(strikes - s, 0.0) if kind == "put" else np.maximum(s - strikes, 0.0)
            out.append(payoff * lr[:, None])
        return _block_stats(0.5 * (out[0] + out[1]))

    return run


def mc_basket_prices(basket: BasketSpec, strikes, paths: int, seed: int, *, kind: Kind = "put",
                     shift=None, martingale_correction: bool = False) -> list[McEstimate]:
    """Monte Carlo basket option prices for several strikes on common paths.

    ``martingale_correction`` rescales each asset by its sample mean (a first
    pass over the same streams), which makes sample put-call parity exact.
    """
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    if np.any(strikes < 0):
        raise DomainError("strikes must be nonnegative")
    if kind not in ("call", "put"):
        raise DomainError("kind must be 'call' or 'put'")
    scale = None
    if martingale_correction:
        probe = _basket_block(basket, strikes, kind, shift, None)
        blocks = _run_blocks(paths, seed, lambda rng, m: probe(rng, m, want_assets=True))
        means = np.array([e.value for e in _estimates(blocks, paths, seed)])
        scale = basket.weights / means
    run = _basket_block(basket, strikes, kind, shift, scale)
    return _estimates(_run_blocks(paths, seed, run), paths, seed)


def mc_basket_asset_means(basket: BasketSpec, paths: int, seed: int) -> list[McEstimate]:
    """Sample means of the compensated assets ``S^i_T / lambda_i`` (no shift)."""
    run = _basket_block(basket, np.zeros(1), "put", None, 1.0 / basket.weights)
    return _estimates(_run_blocks(paths, seed, lambda rng, m: run(rng, m, want_assets=True)), paths, seed)


def mc_basket_put(basket: BasketSpec, strike: float, paths: int, seed: int, *, kind: Kind = "put",
                  shift=None, martingale_correction: bool = False) -> McEstimate:
    """Monte Carlo price of a basket put (or call) with antithetic variates."""
    if paths < 1000:
        raise DomainError("need at least 1000 paths")
    return mc_basket_prices(basket, [strike], paths, seed, kind=kind, shift=shift,
                            martingale_correction=martingale_correction)[0]


# --------------------------------------------------------------------------
# time-changed basket


@dataclass(frozen=True)
class EsscherTilt:
    gamma: float
    s: float
    direction: np.ndarray
    log_mgf: float
    tilted: TimeChangeSpec


def _tilted_mean(tc: TimeChangeSpec, s: float) -> float:
    return tc.tilted(s).mean()


def esscher_tilt(spec: TcBasketSpec, w, target: float) -> EsscherTilt:
    """Tilt ``dQ/dP ~ exp(-gamma X_w)`` with ``X_w = w'(mu tau + B^{1/2} W_tau)``
    chosen so that ``E_Q[X_w] = target``."""
    w = np.asarray(w, dtype=float)
    tc = spec.timechange
    theta = tc.theta
    m = float(w @ spec.mu)
    v = float(w @ spec.cov @ w)
    disc = math.sqrt(m * m + 2.0 * theta * v)
    g_hi = (m + disc) / v
    g_lo = (m - disc) / v

    def s_of(g):
        return 0.5 * g * g * v - g * m

    def h(g):
        return _tilted_mean(tc, s_of(g)) * (m - g * v) - target

    shrink = 1.0 - 1e-9
    a, b = g_lo * shrink, g_hi * shrink
    ha, hb = h(a), h(b)
    if ha < 0 or hb > 0:
        raise BasketWingError("cannot place the tilted mean at the target")
    g = optimize.brentq(h, a, b, xtol=1e-14, rtol=1e-12)
    s = s_of(g)
    return EsscherTilt(g, s, w, math.log(tc.laplace(-s)), tc.tilted(s))


def _left_target(spec: TcBasketSpec, w, k: float) -> float:
    return -k - float(w @ (np.log(spec.weights) + spec.mu_tilde))


def _auto_tilt(spec: TcBasketSpec, strike: float, kind: Kind) -> EsscherTilt | None:
    k = math.log(strike)
    if kind == "put" and k < -TILT_MIN_LOG_STRIKE:
        w = saddle_cstar(spec.cov, spec.mu, spec.timechange.theta).w_bar
        return esscher_tilt(spec, w, _left_target(spec, w, -k))
    if kind == "call" and k > TILT_MIN_LOG_STRIKE:
        j = int(np.argmin(spec.asset_slopes()))
        w = np.zeros(spec.n)
        w[j] = 1.0
        return esscher_tilt(spec, w, k - math.log(spec.weights[j]) - spec.mu_tilde[j])
    return None


def _tc_block(spec: TcBasketSpec, payoff: Callable[[np.ndarray, np.ndarray], np.ndarray], tilt: EsscherTilt | None):
    n = spec.n
    # the principal root keeps the tilt direction consistent with B^{1/2}
    eig, vec = np.linalg.eigh(spec.cov)
    root = (vec * np.sqrt(eig)) @ vec.T
    base = np.log(spec.weights) + spec.mu_tilde
    law = spec.timechange if tilt is None else tilt.tilted
    if tilt is not None:
        shift_dir = -tilt.gamma * (root.T @ tilt.direction)

    def run(rng, n_pairs):
        tau = law.sample(rng, n_pairs)
        sq = np.sqrt(tau)[:, None]
        eps = rng.standard_normal((n_pairs, n))
        mean_z = 0.0 if tilt is None else sq * shift_dir
        out = []
        for sign in (1.0, -1.0):
            z = mean_z + sign * eps
            x = spec.mu * tau[:, None] + sq * (z @ root.T)
            log_assets = base + x
            val = payoff(log_assets, tau)
            if tilt is not None:
                lr = np.exp(tilt.log_mgf + tilt.gamma * (x @ tilt.direction))
                val = val * lr[:, None]
            out.append(val)
        return _block_stats(0.5 * (out[0] + out[1]))

    return run


def mc_timechanged_prices(spec: TcBasketSpec, strikes, paths: int, seed: int, *, kind: Kind = "put",
                          tilt: EsscherTilt | None | str = "auto") -> list[McEstimate]:
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    if tilt == "auto":
        tilt = _auto_tilt(spec, float(strikes[0]), kind)

    def payoff(log_assets, tau):
        s = np.exp(log_assets).sum(axis=1)[:, None]
        return np.maximum(strikes - s, 0.0) if kind == "put" else np.maximum(s - strikes, 0.0)

    return _estimates(_run_blocks(paths, seed, _tc_block(spec, payoff, tilt)), paths, seed)


def mc_timechanged_put(spec: TcBasketSpec, strike: float, paths: int, seed: int, *, kind: Kind = "put",
                       tilt: EsscherTilt | None | str = "auto") -> McEstimate:
    """Monte Carlo price of a put (or call) on the time-changed basket.

    With ``tilt="auto"`` deep out-of-the-money strikes are importance sampled
    with an Esscher tilt along the saddle direction (puts) or the fattest
    asset (calls).
    """
    return mc_timechanged_prices(spec, [strike], paths, seed, kind=kind, tilt=tilt)[0]


def mc_timechanged_tail(spec: TcBasketSpec, k: float, paths: int, seed: int, *, tilt: bool = True) -> McEstimate:
    """``P[S_tau <= exp(-k)]`` by Monte Carlo, importance sampled by default."""
    t = None
    if tilt:
        w = saddle_cstar(spec.cov, spec.mu, spec.timechange.theta).w_bar
        t = esscher_tilt(spec, w, _left_target(spec, w, k))

    def payoff(log_assets, tau):
        lse = logsumexp(log_assets, axis=1)
        return (lse <= -k).astype(float)[:, None]

    return _estimates(_run_blocks(paths, seed, _tc_block(spec, payoff, t)), paths, seed)[0]


def mc_asset_means(spec: TcBasketSpec, paths: int, seed: int) -> list[McEstimate]:
    """Sample means of the compensated assets ``S^i_T / S^i_0`` (no tilt)."""
    log_w = np.log(spec.weights)

    def payoff(log_assets, tau):
        return np.exp(log_assets - log_w)

    return _estimates(_run_blocks(paths, seed, _tc_block(spec, payoff, None)), paths, seed)


# --------------------------------------------------------------------------
# deterministic quadrature


@lru_cache(maxsize=32)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _log_one_minus_exp(x):
    """``log(1 - exp(x))`` for ``x <= 0``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > -0.693, np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


class _Conditional:
    """Log-integrand in the first Gaussian factor ``z`` for 1 or 2 assets."""

    def __init__(self, weights, cov, maturity):
        lam = np.asarray(weights, dtype=float)
        cov = np.asarray(cov, dtype=float)
        keep = lam > 0
        if not keep.any():
            raise DomainError("at least one weight must be positive")
        lam, cov = lam[keep], cov[np.ix_(keep, keep)]
        if lam.size > 2:
            raise DomainError("deterministic quadrature supports one or two assets")
        self.n = lam.size
        T = float(maturity)
        mu = np.log(lam) - 0.5 * np.diag(cov) * T
        self.mu1 = float(mu[0])
        self.s1 = math.sqrt(cov[0, 0] * T)
        if self.n == 2:
            s2 = math.sqrt(cov[1, 1] * T)
            rho = cov[0, 1] / math.sqrt(cov[0, 0] * cov[1, 1])
            self.sd2 = s2 * math.sqrt(max(1.0 - rho * rho, 0.0))
            self.b2 = rho * s2
            # E[exp(Y2) | z] = exp(mu2 + rho s2 z + sd2^2 / 2)
            self.a2 = float(mu[1]) + 0.5 * self.sd2**2
            self.mu2 = float(mu[1])

    def z_at(self, log_x: float) -> float:
        return (log_x - self.mu1) / self.s1

    def log_price(self, z, log_k: float, kind: Kind):
        z = np.asarray(z, dtype=float)
        y1 = self.mu1 + self.s1 * z
        out = np.full(z.shape, -np.inf)
        below = y1 < log_k
        lk2 = log_k + _log_one_minus_exp(np.minimum(y1 - log_k, 0.0))
        above_gap = y1 + _log_one_minus_exp(np.minimum(log_k - y1, 0.0))
        if self.n == 1:
            if kind == "put":
                out[below] = lk2[below]
            else:
                out[~below] = above_gap[~below]
        else:
            lf2 = self.a2 + self.b2 * z
            sd = np.full(z.shape, self.sd2)
            if kind == "put":
                if below.any():
                    out[below] = log_put_forward(lf2[below], lk2[below], sd[below])
            else:
                if below.any():
                    out[below] = log_put_forward(lk2[below], lf2[below], sd[below])
                ab = ~below
                out[ab] = np.logaddexp(above_gap[ab], lf2[ab])
        return out - 0.5 * z * z - 0.5 * math.log(2.0 * math.pi)

    def log_density(self, z, log_x: float):
        z = np.asarray(z, dtype=float)
        y1 = self.mu1 + self.s1 * z
        out = np.full(z.shape, -np.inf)
        below = y1 < log_x
        if self.n == 1:
            raise DomainError("density quadrature needs two assets")
        ly = log_x + _log_one_minus_exp(np.minimum(y1 - log_x, 0.0))
        m2 = self.mu2 + self.b2 * z
        u = (ly - m2) / self.sd2
        val = -0.5 * u * u - 0.5 * math.log(2.0 * math.pi) - np.log(self.sd2) - ly
        out[below] = val[below]
        return out - 0.5 * z * z - 0.5 * math.log(2.0 * math.pi)

    def log_cdf(self, z, log_x: float):
        z = np.asarray(z, dtype=float)
        y1 = self.mu1 + self.s1 * z
        out = np.full(z.shape, -np.inf)
        below = y1 < log_x
        if self.n == 1:
            out[below] = 0.0
        else:
            ly = log_x + _log_one_minus_exp(np.minimum(y1 - log_x, 0.0))
            u = (ly - (self.mu2 + self.b2 * z)) / self.sd2
            out[below] = log_ndtr(u[below])
        return out - 0.5 * z * z - 0.5 * math.log(2.0 * math.pi)


def _log_integrate(g: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, nodes: int,
                   breaks: tuple[float, ...] = ()) -> float:
    """``log int_lo^hi exp(g(z)) dz`` with panels on the region that matters."""
    grid = np.linspace(lo, hi, SCAN_POINTS)
    vals = g(grid)
    peak = np.max(vals)
    if not np.isfinite(peak):
        return -math.inf
    hot = np.flatnonzero(vals > peak - LOG_WINDOW)
    step = grid[1] - grid[0]
    a = max(lo, grid[hot[0]] - step)
    b = min(hi, grid[hot[-1]] + step)
    cuts = np.linspace(a, b, QUAD_PANELS + 1)
    cuts = np.unique(np.concatenate([cuts, [c for c in breaks if a < c < b]]))
    x0, w0 = _gauss_legendre(max(nodes // QUAD_PANELS, 8))
    terms = []
    for left, right in zip(cuts[:-1], cuts[1:]):
        half = 0.5 * (right - left)
        z = left + half * (x0 + 1.0)
        terms.append(g(z) + np.log(w0 * half))
    return float(logsumexp(np.concatenate(terms)))


def _check_nodes(nodes: int):
    if not NODES_MIN <= nodes <= NODES_MAX:
        raise DomainError(f"nodes must lie in [{NODES_MIN}, {NODES_MAX}]")


def _scan_bounds(cond: _Conditional, log_x: float, kind: Kind) -> tuple[float, float]:
    z_max = cond.z_at(log_x)
    if kind == "put":
        return min(-40.0, 3.0 * z_max - 40.0), min(z_max, 40.0)
    return max(-40.0, min(z_max, 0.0) - 40.0), max(40.0, 3.0 * z_max + 40.0)


def _with_doubling(fn: Callable[[int], float], nodes: int, check: bool) -> float:
    value = fn(nodes)
    if check:
        fine = fn(2 * nodes)
        if math.isfinite(value) and abs(math.expm1(fine - value)) > DOUBLING_RTOL:
            warnings.warn(f"quadrature node doubling changed the result by {abs(math.expm1(fine - value)):.2e}",
                          PrecisionWarning, stacklevel=3)
        value = fine if math.isfinite(fine) else value
    return value


def quad_log_price_raw(weights, cov, maturity: float, strike: float, kind: Kind = "put",
                       nodes: int = 300, *, check: bool = True) -> float:
    """Log price of a one- or two-asset basket option by conditional quadrature.

    Takes raw parameters so that degenerate weights (one of them zero) can be
    used for cross-checks.
    """
    _check_nodes(nodes)
    if not strike > 0:
        raise DomainError("strike must be positive")
    if kind not in ("call", "put"):
        raise DomainError("kind must be 'call' or 'put'")
    cond = _Conditional(weights, cov, maturity)
    log_k = math.log(strike)
    lo, hi = _scan_bounds(cond, log_k, kind)
    z_max = cond.z_at(log_k)
    return _with_doubling(
        lambda m: _log_integrate(lambda z: cond.log_price(z, log_k, kind), lo, hi, m, (z_max,)), nodes, check
    )


def quad_log_price(basket: BasketSpec, strike: float, kind: Kind = "put", nodes: int = 300, *, check: bool = True) -> float:
    return quad_log_price_raw(basket.weights, basket.cov, basket.maturity, strike, kind, nodes, check=check)


def quad_put_2d(two_asset: BasketSpec, strike: float, nodes_per_dim: int = 300) -> float:
    """Put price of a two-asset basket by quadrature (may underflow to 0;
    use :func:`quad_log_price` in the deep wing)."""
    if two_asset.n != 2:
        raise DomainError("quad_put_2d needs a two-asset basket")
    return math.exp(quad_log_price(two_asset, strike, "put", nodes_per_dim))


def quad_log_density(basket: BasketSpec, x: float, nodes: int = 300) -> float:
    """Log density of a two-asset basket at ``x``."""
    _check_nodes(nodes)
    if basket.n != 2:
        raise DomainError("density quadrature needs two assets")
    if not x > 0:
        raise DomainError("x must be positive")
    cond = _Conditional(basket.weights, basket.cov, basket.maturity)
    lx = math.log(x)
    lo, hi = _scan_bounds(cond, lx, "put")
    return _with_doubling(lambda m: _log_integrate(lambda z: cond.log_density(z, lx), lo, hi, m), nodes, True)


def quad_density_2d(basket: BasketSpec, x: float, nodes: int = 300) -> float:
    return math.exp(quad_log_density(basket, x, nodes))


def quad_log_cdf(basket: BasketSpec, x: float, nodes: int = 300) -> float:
    """``log P[S_T <= x]`` for a one- or two-asset basket."""
    _check_nodes(nodes)
    if not x > 0:
        raise DomainError("x must be positive")
    cond = _Conditional(basket.weights, basket.cov, basket.maturity)
    lx = math.log(x)
    if cond.n == 1:
        return float(log_ndtr(cond.z_at(lx)))
    lo, hi = _scan_bounds(cond, lx, "put")
    return _with_doubling(lambda m: _log_integrate(lambda z: cond.log_cdf(z, lx), lo, hi, m), nodes, True)


def quad_timechanged_log_price(spec: TcBasketSpec, strike: float, kind: Kind = "put", nodes: int = 300) -> float:
    """Log price for a single time-changed asset, integrating the conditional
    Black-Scholes price against the law of ``tau`` (in ``log tau``)."""
    _check_nodes(nodes)
    if spec.n != 1:
        raise DomainError("time-changed quadrature supports a single asset")
    tc = spec.timechange
    b = float(spec.cov[0, 0])
    mu = float(spec.mu[0])
    base = math.log(spec.weights[0]) + float(spec.mu_tilde[0])
    log_k = math.log(strike)

    def g(log_tau):
        tau = np.exp(log_tau)
        lf = base + (mu + 0.5 * b) * tau
        sd = np.sqrt(b * tau)
        if kind == "put":
            lp = log_put_forward(lf, log_k, sd)
        else:
            lp = log_put_forward(log_k, lf, sd)
        return lp + tc.log_pdf(tau) + log_tau

    span = abs(log_k) + 50.0
    hi = math.log(max(50.0 * tc.mean(), 20.0 * span / tc.theta))
    lo = math.log(tc.mean()) - 40.0
    return _with_doubling(lambda m: _log_integrate(g, lo, hi, m), nodes, True)


# --------------------------------------------------------------------------
# implied volatility curves


Pricer = Callable[[float, Kind], PriceQuote]


def quad_pricer(basket: BasketSpec, nodes: int = 300) -> Pricer:
    def price(strike, kind):
        return PriceQuote(quad_log_price(basket, strike, kind, nodes), 0.0, "quad")

    return price


def mc_pricer(basket: BasketSpec, paths: int, seed: int, *, importance: bool = True) -> Pricer:
    def price(strike, kind):
        shift = tail_shift(basket, strike, kind) if importance else None
        est = mc_basket_put(basket, strike, paths, seed, kind=kind, shift=shift)
        lp = math.log(est.value) if est.value > 0 else -math.inf
        return PriceQuote(lp, est.std_error, "mc")

    return price


def tc_mc_pricer(spec: TcBasketSpec, paths: int, seed: int) -> Pricer:
    def price(strike, kind):
        est = mc_timechanged_put(spec, strike, paths, seed, kind=kind)
        lp = math.log(est.value) if est.value > 0 else -math.inf
        return PriceQuote(lp, est.std_error, "mc")

    return price


def tc_quad_pricer(spec: TcBasketSpec, nodes: int = 300) -> Pricer:
    def price(strike, kind):
        return PriceQuote(quad_timechanged_log_price(spec, strike, kind, nodes), 0.0, "quad")

    return price


def empirical_iv_curve(pricer: Pricer, k_grid, side: str, maturity: float = 1.0) -> list[IvCurvePoint]:
    """Implied volatilities at strikes ``exp(-k)`` (left) or ``exp(k)`` (right).

    Monte Carlo points whose price is under ``NOISE_FLOOR`` standard errors
    are returned unusable instead of inverted; inversion failures are
    recorded per point.
    """
    if side not in ("left", "right"):
        raise DomainError("side must be 'left' or 'right'")
    kind: Kind = "put" if side == "left" else "call"
    points = []
    for k in k_grid:
        k = float(k)
        strike = math.exp(-k if side == "left" else k)
        quote = pricer(strike, kind)
        price = math.exp(quote.log_price) if math.isfinite(quote.log_price) else 0.0
        if quote.noise > 0 and not price > NOISE_FLOOR * quote.noise:
            points.append(IvCurvePoint(k, strike, price, None, quote.source, False, "below Monte Carlo noise floor"))
            continue
        try:
            iv = implied_vol_from_log_price(quote.log_price, 1.0, strike, maturity, kind)
        except BasketWingError as exc:
            points.append(IvCurvePoint(k, strike, price, None, quote.source, False, str(exc)))
            continue
        points.append(IvCurvePoint(k, strike, price, iv, quote.source))
    return points
