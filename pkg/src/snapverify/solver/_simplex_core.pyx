# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bounded-variable primal simplex iterations.

Mirrors ``_simplex_py.iterate`` rule for rule; see that module for the
meaning of the arguments.
"""
from libc.math cimport fabs, INFINITY, isfinite

cdef int OPTIMAL = 0
cdef int UNBOUNDED = 1
cdef int ITERATION_LIMIT = 2

cdef double TIE_TOL = 1e-12
cdef double DEGENERATE_STEP = 1e-12


def iterate(double[:, ::1] T, double[::1] beta, double[::1] d,
            long long[::1] basis, unsigned char[::1] is_basic,
            unsigned char[::1] at_upper, double[::1] ub, long long max_iter,
            double opt_tol, double piv_tol, long long degen_threshold,
            bint bland):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t n = T.shape[1]
    cdef Py_ssize_t i, k, j, r
    cdef long long it = 0
    cdef long long degenerate = 0
    cdef double best, theta, a, rt, score, best_score, direction, pivot, f, dj
    cdef double entering_value, ubb
    cdef long long leaving
    cdef bint up

    while True:
        if it >= max_iter:
            return ITERATION_LIMIT, it, bland

        j = -1
        best_score = -1.0
        for k in range(n):
            if is_basic[k] or not (ub[k] > 0.0):
                continue
            up = at_upper[k] != 0
            if (not up and d[k] < -opt_tol) or (up and d[k] > opt_tol):
                if bland:
                    j = k
                    break
                score = fabs(d[k])
                if score > best_score:
                    best_score = score
                    j = k
        if j < 0:
            return OPTIMAL, it, bland
        direction = -1.0 if at_upper[j] else 1.0

        # ratio test: exact minimum first, then tie-break among near-minima
        best = INFINITY
        for i in range(m):
            a = T[i, j] * direction
            if a > piv_tol:
                rt = (beta[i] if beta[i] > 0.0 else 0.0) / a
            elif a < -piv_tol and isfinite(ub[basis[i]]):
                ubb = ub[basis[i]] - beta[i]
                rt = (ubb if ubb > 0.0 else 0.0) / (-a)
            else:
                continue
            if rt < best:
                best = rt
        r = -1
        if isfinite(best):
            best_score = -1.0
            for i in range(m):
                a = T[i, j] * direction
                if a > piv_tol:
                    rt = (beta[i] if beta[i] > 0.0 else 0.0) / a
                elif a < -piv_tol and isfinite(ub[basis[i]]):
                    ubb = ub[basis[i]] - beta[i]
                    rt = (ubb if ubb > 0.0 else 0.0) / (-a)
                else:
                    continue
                if rt <= best + TIE_TOL:
                    if bland:
                        if r < 0 or basis[i] < basis[r]:
                            r = i
                    else:
                        if fabs(a) > best_score:
                            best_score = fabs(a)
                            r = i
        theta = best
        if ub[j] <= best:
            theta = ub[j]
            r = -1
        if not isfinite(theta):
            return UNBOUNDED, it, bland

        it += 1
        if theta <= DEGENERATE_STEP:
            degenerate += 1
            if degenerate > degen_threshold:
                bland = True
        else:
            degenerate = 0

        if theta != 0.0:
            for i in range(m):
                beta[i] -= theta * (T[i, j] * direction)
        if r < 0:
            at_upper[j] = 0 if at_upper[j] else 1
            continue

        entering_value = (ub[j] if at_upper[j] else 0.0) + direction * theta
        leaving = basis[r]
        a = T[r, j] * direction
        # leaving variable goes to the bound it hit
        if a > piv_tol:
            at_upper[leaving] = 0
        else:
            at_upper[leaving] = 1
        is_basic[leaving] = 0
        beta[r] = entering_value

        pivot = T[r, j]
        for k in range(n):
            T[r, k] /= pivot
        for i in range(m):
            if i == r:
                continue
            f = T[i, j]
            if f != 0.0:
                for k in range(n):
                    T[i, k] -= f * T[r, k]
        for i in range(m):
            T[i, j] = 0.0
        T[r, j] = 1.0
        dj = d[j]
        if dj != 0.0:
            for k in range(n):
                d[k] -= dj * T[r, k]
        d[j] = 0.0
        basis[r] = j
        is_basic[j] = 1
        at_upper[j] = 0
