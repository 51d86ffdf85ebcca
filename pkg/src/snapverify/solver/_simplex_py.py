"""Pure-numpy bounded-variable primal simplex iterations.

Reference implementation of the kernel in ``_simplex_core.pyx``. Both
operate in place on the same arrays and follow identical pivoting rules,
so they produce the same basis sequence on the same input.
"""
import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2

TIE_TOL = 1e-12
DEGENERATE_STEP = 1e-12


def iterate(T, beta, d, basis, is_basic, at_upper, ub, max_iter,
            opt_tol, piv_tol, degen_threshold, bland):
    """Run simplex iterations on a tableau until optimal or unbounded.

    ``T`` is the m x n tableau ``B^-1 A``, ``beta`` the basic values,
    ``d`` the reduced costs (minimisation), ``ub`` the upper bounds of the
    shifted variables (lower bounds are all zero). Nonbasic variables sit
    at zero unless ``at_upper`` is set.

    Returns ``(status, iterations, bland)``.
    """
    m, n = T.shape
    degenerate = 0
    it = 0
    while True:
        if it >= max_iter:
            return ITERATION_LIMIT, it, bland
        free = (is_basic == 0) & (ub > 0.0)
        up = at_upper != 0
        eligible = free & (((~up) & (d < -opt_tol)) | (up & (d > opt_tol)))
        if not eligible.any():
            return OPTIMAL, it, bland
        if bland:
            j = int(np.flatnonzero(eligible)[0])
        else:
            score = np.where(eligible, np.abs(d), -1.0)
            j = int(np.argmax(score))
        direction = -1.0 if at_upper[j] else 1.0

        col = T[:, j] * direction
        ub_b = ub[basis]
        ratio = np.full(m, np.inf)
        to_upper = np.zeros(m, dtype=bool)
        dec = col > piv_tol
        ratio[dec] = np.maximum(beta[dec], 0.0) / col[dec]
        inc = (col < -piv_tol) & np.isfinite(ub_b)
        ratio[inc] = np.maximum(ub_b[inc] - beta[inc], 0.0) / (-col[inc])
        to_upper[inc] = True

        r = -1
        best = np.inf
        if m:
            best = ratio.min()
        if np.isfinite(best):
            ties = np.flatnonzero(ratio <= best + TIE_TOL)
            if bland:
                r = int(ties[np.argmin(basis[ties])])
            else:
                mags = np.abs(col[ties])
                r = int(ties[np.argmax(mags)])
        theta = best
        if ub[j] <= best:
            theta = ub[j]
            r = -1
        if not np.isfinite(theta):
            return UNBOUNDED, it, bland

        it += 1
        if theta <= DEGENERATE_STEP:
            degenerate += 1
            if degenerate > degen_threshold:
                bland = True
        else:
            degenerate = 0

        if theta != 0.0:
            beta -= theta * col
        if r < 0:
            at_upper[j] = 0 if at_upper[j] else 1
            continue

        entering_value = (ub[j] if at_upper[j] else 0.0) + direction * theta
        leaving = basis[r]
        at_upper[leaving] = 1 if to_upper[r] else 0
        is_basic[leaving] = 0
        beta[r] = entering_value

        pivot = T[r, j]
        T[r, :] /= pivot
        factors = T[:, j].copy()
        factors[r] = 0.0
        T -= np.outer(factors, T[r, :])
        T[:, j] = 0.0
        T[r, j] = 1.0
        d -= d[j] * T[r, :]
        d[j] = 0.0
        basis[r] = j
        is_basic[j] = 1
        at_upper[j] = 0
