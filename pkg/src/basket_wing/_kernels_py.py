"""Pure-Python fallback for the compiled active-set kernel.

Solves ``min 1/2 u'Bu - c'u`` over the nonnegative orthant for a symmetric
positive definite ``B`` with a Lawson-Hanson style primal active-set method:

1. optionally start from a warm support ``P`` if the reduced solution
   ``B[P,P]^{-1} c[P]`` is strictly positive, otherwise from ``u = 0``;
2. add the inactive index with the largest negative gradient ``(c - Bu)_j``
   (smallest index on ties);
3. re-solve on the support; if some component is not positive, step back to
   the boundary and drop the blocking indices; repeat until positive.

Each step strictly lowers the objective, so the support sequence never
repeats and the method terminates with an exact KKT point.
"""
import numpy as np


def _solve_active(B, c, active):
    z = np.zeros(B.shape[0])
    idx = np.flatnonzero(active)
    if idx.size:
        block = B[np.ix_(idx, idx)]
        try:
            L = np.linalg.cholesky(block)
        except np.linalg.LinAlgError:
            return None
        y = np.linalg.solve(L, c[idx])
        z[idx] = np.linalg.solve(L.T, y)
    return z


def nnqp(B, c, warm, tol, max_iter):
    """Return ``(u, status, iterations)``; status 0 on convergence,
    1 on iteration limit, 2 on a non positive definite active block."""
    B = np.ascontiguousarray(B, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    n = B.shape[0]
    active = np.asarray(warm, dtype=bool).copy()
    u = np.zeros(n)
    if active.any():
        z = _solve_active(B, c, active)
        if z is None:
            return u, 2, 0
        if np.all(z[active] > 0):
            u = z
        else:
            active[:] = False
    it = 0
    while True:
        if it >= max_iter:
            return u, 1, it
        it += 1
        grad = c - B @ u
        grad[active] = -np.inf
        best = int(np.argmax(grad))
        if not grad[best] > tol:
            return u, 0, it
        active[best] = True
        for _ in range(max_iter):
            z = _solve_active(B, c, active)
            if z is None:
                return u, 2, it
            blocking = active & (z <= 0)
            if not blocking.any():
                u = z
                break
            ratios = u[blocking] / (u[blocking] - z[blocking])
            alpha = ratios.min()
            u = np.where(active, u + alpha * (z - u), 0.0)
            drop = active & ((u <= tol * (np.abs(z) + 1e-300)) | (u <= 0))
            u[drop] = 0.0
            active[drop] = False
        else:
            return u, 1, it
