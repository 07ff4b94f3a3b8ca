# cython: language_level=3
"""Compiled active-set solver for ``min 1/2 u'Bu - c'u  s.t.  u >= 0``.

Mirrors :mod:`basket_wing._kernels_py` step for step; see that module for
the algorithm description.
"""
import numpy as np

from libc.math cimport sqrt, fabs


cdef int _chol_solve(double[:, ::1] B, unsigned char[::1] active, double[::1] c,
                     double[:, ::1] work, int[::1] idx, double[::1] rhs,
                     double[::1] z) noexcept nogil:
    """Solve B[P, P] z[P] = c[P] by Cholesky; z is zero off P.

    Returns 0 on success, -1 if the active block is not positive definite.
    """
    cdef Py_ssize_t n = B.shape[0]
    cdef Py_ssize_t m = 0, i, j, k
    cdef double s
    for i in range(n):
        z[i] = 0.0
        if active[i]:
            idx[m] = <int>i
            m += 1
    if m == 0:
        return 0
    for i in range(m):
        for j in range(i + 1):
            s = B[idx[i], idx[j]]
            for k in range(j):
                s -= work[i, k] * work[j, k]
            if i == j:
                if s <= 0.0:
                    return -1
                work[i, i] = sqrt(s)
            else:
                work[i, j] = s / work[j, j]
    for i in range(m):
        s = c[idx[i]]
        for k in range(i):
            s -= work[i, k] * rhs[k]
        rhs[i] = s / work[i, i]
    for i in range(m - 1, -1, -1):
        s = rhs[i]
        for k in range(i + 1, m):
            s -= work[k, i] * rhs[k]
        rhs[i] = s / work[i, i]
    for i in range(m):
        z[idx[i]] = rhs[i]
    return 0


def nnqp(double[:, ::1] B, double[::1] c, unsigned char[::1] warm, double tol, int max_iter):
    """Return ``(u, status, iterations)``; status 0 on convergence,
    1 on iteration limit, 2 on a non positive definite active block."""
    cdef Py_ssize_t n = B.shape[0]
    cdef Py_ssize_t i, j, best
    cdef double gbest, g, alpha, ratio
    cdef int it = 0, status = 0, inner
    cdef bint all_pos, any_active
    u_arr = np.zeros(n)
    cdef double[::1] u = u_arr
    cdef double[::1] z = np.zeros(n)
    cdef double[::1] rhs = np.zeros(n)
    cdef double[:, ::1] work = np.zeros((n, n))
    cdef int[::1] idx = np.zeros(n, dtype=np.intc)
    cdef unsigned char[::1] active = np.zeros(n, dtype=np.uint8)

    with nogil:
        any_active = False
        for i in range(n):
            active[i] = warm[i]
            if warm[i]:
                any_active = True
        if any_active:
            if _chol_solve(B, active, c, work, idx, rhs, z) != 0:
                status = 2
            else:
                all_pos = True
                for i in range(n):
                    if active[i] and z[i] <= 0.0:
                        all_pos = False
                if all_pos:
                    for i in range(n):
                        u[i] = z[i]
                else:
                    for i in range(n):
                        active[i] = 0
                        u[i] = 0.0
        while status == 0:
            if it >= max_iter:
                status = 1
                break
            it += 1
            # entering index: largest negative gradient, smallest index on ties
            best = -1
            gbest = tol
            for j in range(n):
                if active[j]:
                    continue
                g = c[j]
                for i in range(n):
                    g -= B[j, i] * u[i]
                if g > gbest:
                    gbest = g
                    best = j
            if best < 0:
                break
            active[best] = 1
            inner = 0
            while True:
                inner += 1
                if inner > max_iter:
                    status = 1
                    break
                if _chol_solve(B, active, c, work, idx, rhs, z) != 0:
                    status = 2
                    break
                all_pos = True
                for i in range(n):
                    if active[i] and z[i] <= 0.0:
                        all_pos = False
                        break
                if all_pos:
                    for i in range(n):
                        u[i] = z[i]
                    break
                alpha = 2.0
                for i in range(n):
                    if active[i] and z[i] <= 0.0:
                        ratio = u[i] / (u[i] - z[i])
                        if ratio < alpha:
                            alpha = ratio
                for i in range(n):
                    if active[i]:
                        u[i] = u[i] + alpha * (z[i] - u[i])
                        if u[i] <= tol * (fabs(z[i]) + 1e-300) or u[i] <= 0.0:
                            u[i] = 0.0
                            active[i] = 0
    return u_arr, status, it
