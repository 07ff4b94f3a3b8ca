"""Quadratic minimisation over the probability simplex and the min-max saddle
constant of the time-changed basket tail.

Both problems reduce to the nonnegative quadratic program

    min_{u >= 0}  1/2 u'Bu - c'u

solved exactly by the active-set kernel in :mod:`basket_wing._backend`.

* Simplex QP: with ``c = 1`` the minimiser ``u`` gives ``w = u / sum(u)`` and
  ``min_w w'Bw = 1 / sum(u)``.  On the support, ``u`` coincides with the row
  sums of the inverse reduced matrix.
* Saddle: for fixed ``t`` the concave inner problem
  ``max_{u >= 0} theta t + a'u - (t/2) u'Bu`` with ``a = 1 + mu t`` is the
  same QP with ``c = a / t``; its value ``fbar(t)`` is strictly convex in
  ``t`` with derivative ``theta - u'(1 - mu t) / (2t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DomainError, MatrixError, OptimizationError

COND_MAX = 1e12
KKT_TOL = 1e-14
EXACT_MAX_N = 20
_GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)


@dataclass(frozen=True)
class SimplexSolution:
    w_bar: np.ndarray
    value: float
    support: tuple[int, ...]
    n_bar: int
    B_bar: np.ndarray
    A_row_sums: np.ndarray

    def kkt_slack(self, cov) -> float:
        """Smallest ``(Bw)_i - value`` off the support (nonnegative at optimum)."""
        g = np.asarray(cov, dtype=float) @ self.w_bar - self.value
        off = np.setdiff1d(np.arange(g.size), self.support)
        return float(g[off].min()) if off.size else 0.0


@dataclass(frozen=True)
class SaddlePoint:
    c_star: float
    t_bar: float
    w_bar: np.ndarray
    u_bar: np.ndarray


def validate_cov(cov, name: str = "cov") -> np.ndarray:
    """Return ``cov`` as a float array after checking it is symmetric positive
    definite with condition number at most ``COND_MAX``."""
    B = np.array(cov, dtype=float, ndmin=2)
    if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] == 0:
        raise MatrixError(f"{name} must be a nonempty square matrix")
    if not np.all(np.isfinite(B)):
        raise MatrixError(f"{name} has non-finite entries")
    scale = np.max(np.abs(B))
    if np.max(np.abs(B - B.T)) > 1e-12 * scale:
        raise MatrixError(f"{name} is not symmetric")
    B = 0.5 * (B + B.T)
    eig = np.linalg.eigvalsh(B)
    if eig[0] <= 0:
        raise MatrixError(f"{name} is not positive definite (smallest eigenvalue {eig[0]:.3e})")
    if eig[-1] / eig[0] > COND_MAX:
        raise MatrixError(f"{name} condition number {eig[-1] / eig[0]:.3e} exceeds {COND_MAX:.0e}")
    return np.ascontiguousarray(B)


def _projected_gradient_support(B: np.ndarray, iters: int = 500) -> np.ndarray:
    """Approximate simplex minimiser for large n; only its support is used."""
    n = B.shape[0]
    w = np.full(n, 1.0 / n)
    step = 1.0 / np.linalg.eigvalsh(B)[-1]
    for _ in range(iters):
        w = _project_simplex(w - step * (B @ w))
    return w > 1e-10


def _project_simplex(v: np.ndarray) -> np.ndarray:
    s = np.sort(v)[::-1]
    css = np.cumsum(s) - 1.0
    k = np.nonzero(s - css / np.arange(1, v.size + 1) > 0)[0][-1]
    return np.maximum(v - css[k] / (k + 1), 0.0)


def _warm_support(B: np.ndarray, c: np.ndarray) -> np.ndarray:
    if B.shape[0] > EXACT_MAX_N:
        return _projected_gradient_support(B).astype(np.uint8)
    return (np.linalg.solve(B, c) > 0).astype(np.uint8)


def nonneg_qp(B: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact minimiser of ``1/2 u'Bu - c'u`` over ``u >= 0`` (``B`` already validated)."""
    c = np.ascontiguousarray(c, dtype=float)
    n = B.shape[0]
    u, status, _ = _backend.nnqp(B, c, _warm_support(B, c), KKT_TOL, 50 * n + 50)
    if status == 2:
        raise MatrixError("active block lost positive definiteness")
    if status != 0:
        raise OptimizationError("active-set iteration limit reached")
    u = np.asarray(u)
    grad = c - B @ u
    scale = max(1.0, float(np.max(np.abs(c))))
    if np.any(grad[u == 0] > 1e-9 * scale) or np.any(np.abs(grad[u > 0]) > 1e-9 * scale):
        raise OptimizationError("active-set solution fails its optimality conditions")
    return u


def min_quadratic_simplex(cov) -> SimplexSolution:
    """Minimise ``w'Bw`` over the probability simplex."""
    B = validate_cov(cov)
    u = nonneg_qp(B, np.ones(B.shape[0]))
    support = tuple(int(i) for i in np.flatnonzero(u > 0))
    idx = np.array(support)
    B_bar = B[np.ix_(idx, idx)]
    # row sums of the inverse reduced matrix, re-solved on the final support
    A = np.linalg.solve(B_bar, np.ones(idx.size))
    total = float(A.sum())
    w = np.zeros(B.shape[0])
    w[idx] = A / total
    return SimplexSolution(
        w_bar=w,
        value=1.0 / total,
        support=support,
        n_bar=len(support),
        B_bar=B_bar,
        A_row_sums=A,
    )


def _check_saddle_inputs(cov, drift, theta):
    B = validate_cov(cov)
    mu = np.array(drift, dtype=float, ndmin=1)
    if mu.shape != (B.shape[0],):
        raise DomainError("drift must have one entry per asset")
    if not np.all(np.isfinite(mu)):
        raise DomainError("drift must be finite")
    if not (math.isfinite(theta) and theta > 0):
        raise DomainError("theta must be positive")
    return B, mu, float(theta)


def _inner(B, mu, theta, t):
    a = 1.0 + mu * t
    if np.all(a <= 0):
        return theta * t, np.zeros_like(a), a
    u = nonneg_qp(B, a / t)
    return theta * t + 0.5 * float(a @ u), u, a


def _weights(u, a):
    s = u.sum()
    if s > 0:
        return u / s
    w = np.zeros_like(a)
    w[int(np.argmax(a))] = 1.0
    return w


def inner_max_weights(cov, drift, theta: float, t: float) -> tuple[float, np.ndarray]:
    """``max_{w in simplex} F(t, w)`` and its maximiser, via the dual QP."""
    B, mu, theta = _check_saddle_inputs(cov, drift, theta)
    if not (math.isfinite(t) and t > 0):
        raise DomainError("t must be positive")
    value, u, a = _inner(B, mu, theta, float(t))
    return value, _weights(u, a)


def _dfbar(B, mu, theta, t):
    value, u, a = _inner(B, mu, theta, t)
    return value, theta - float(u @ (1.0 - mu * t)) / (2.0 * t), u, a


def saddle_cstar(cov, drift, theta: float) -> SaddlePoint:
    """Decay constant ``c* = min_{t>0} max_{w} F(t, w)`` and its saddle point."""
    B, mu, theta = _check_saddle_inputs(cov, drift, theta)

    def f(t):
        return _inner(B, mu, theta, t)[0]

    # bracket the root of the increasing derivative
    lo, hi = 1.0, 1.0
    while _dfbar(B, mu, theta, lo)[1] > 0:
        lo *= 0.5
        if lo < 1e-300:
            raise OptimizationError("could not bracket the saddle from below")
    while _dfbar(B, mu, theta, hi)[1] < 0:
        hi *= 2.0
        if hi > 1e300:
            raise OptimizationError("could not bracket the saddle from above")
    if lo == hi:
        lo, hi = 0.5 * lo, 2.0 * hi

    # golden section on the convex function
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > 1e-8 * hi:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    t = 0.5 * (lo + hi)
    best_val, d, u, a = _dfbar(B, mu, theta, t)
    best = (t, best_val, u, a)

    # Newton polish, safeguarded to the bracket and to descent in |f'|
    for _ in range(5):
        support = u > 0
        if not support.any() or d == 0.0:
            break
        ones = np.ones(int(support.sum()))
        curv = float(ones @ np.linalg.solve(B[np.ix_(support, support)], ones)) / t**3
        cand = t - d / curv
        if not (lo - 1e-8 * hi <= cand <= hi + 1e-8 * hi) or cand <= 0:
            break
        val_c, d_c, u_c, a_c = _dfbar(B, mu, theta, cand)
        if abs(d_c) >= abs(d):
            break
        t, d, u, a = cand, d_c, u_c, a_c
        if val_c <= best[1]:
            best = (t, val_c, u, a)
    t, value, u, a = best
    w = _weights(u, a)
    if not 1.0 + t * float(mu @ w) > 0:
        raise OptimizationError("saddle violates 1 + t mu'w > 0")
    return SaddlePoint(c_star=float(value), t_bar=float(t), w_bar=w, u_bar=u)
