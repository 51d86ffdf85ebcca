"""Dense two-phase bounded-variable simplex."""
from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

from . import _kernel
from ._simplex_py import ITERATION_LIMIT, UNBOUNDED

LE, GE, EQ = "<=", ">=", "=="
SENSES = (LE, GE, EQ)


class SolverError(Exception):
    pass


class NumericalFailure(SolverError):
    """The tableau degraded beyond tolerance or the iteration cap was hit."""


class TimeBudgetExceeded(SolverError):
    def __init__(self, message="time budget exceeded", nodes=0):
        super().__init__(message)
        self.nodes = nodes


class Status(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-7
    integrality: float = 1e-6
    optimality: float = 1e-6
    pivot: float = 1e-9
    reduced_cost: float = 1e-9
    degenerate_threshold: int = 50


DEFAULT_TOLERANCES = Tolerances()


@dataclass(eq=False)
class LpProblem:
    """min/max c.x + constant  s.t.  A x (senses) rhs,  lb <= x <= ub."""

    c: np.ndarray
    A: np.ndarray
    senses: tuple
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    maximize: bool = False
    constant: float = 0.0
    names: tuple = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        if n == 0:
            raise ValueError("an LP needs at least one variable")
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.senses = tuple(self.senses)
        self.lb = np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.asarray(self.ub, dtype=float).reshape(-1)
        m = self.A.shape[0]
        if self.rhs.size != m or len(self.senses) != m:
            raise ValueError("constraint dimensions disagree")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound dimensions disagree")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise ValueError(f"unknown constraint sense {bad[0]!r}")

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_constraints(self):
        return self.A.shape[0]

    def with_bounds(self, lb, ub):
        return LpProblem(self.c, self.A, self.senses, self.rhs, lb, ub,
                         self.maximize, self.constant, self.names)

    def max_violation(self, x):
        """Largest constraint or bound violation of ``x`` (absolute)."""
        x = np.asarray(x, dtype=float)
        worst = max(0.0, float(np.max(self.lb - x, initial=0.0)),
                    float(np.max(x - self.ub, initial=0.0)))
        if self.n_constraints:
            ax = self.A @ x
            for s, lhs, r in zip(self.senses, ax, self.rhs):
                if s == LE:
                    v = lhs - r
                elif s == GE:
                    v = r - lhs
                else:
                    v = abs(lhs - r)
                worst = max(worst, v)
        return worst


@dataclass
class SolveResult:
    status: Status
    value: float = None
    x: np.ndarray = None
    iterations: int = 0
    nodes: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


def _standard_form(p):
    """Shift/split variables so every column has lower bound zero."""
    n = p.n_vars
    cols, signs, shifts, uppers = [], [], np.zeros(n), []
    for j in range(n):
        lo, hi = p.lb[j], p.ub[j]
        if math.isfinite(lo):
            cols.append(j)
            signs.append(1.0)
            shifts[j] = lo
            uppers.append(hi - lo)
        elif math.isfinite(hi):
            cols.append(j)
            signs.append(-1.0)
            shifts[j] = hi
            uppers.append(math.inf)
        else:
            cols.extend((j, j))
            signs.extend((1.0, -1.0))
            uppers.extend((math.inf, math.inf))
    cols = np.asarray(cols, dtype=np.int64)
    signs = np.asarray(signs)
    A = p.A[:, cols] * signs if p.n_constraints else np.zeros((0, cols.size))
    b = p.rhs - (p.A @ shifts if p.n_constraints else 0.0)
    c = p.c[cols] * signs
    if p.maximize:
        c = -c
    return cols, signs, shifts, np.asarray(uppers), A, b, c


def solve_lp(p, tol=DEFAULT_TOLERANCES, backend=None, max_iter=None):
    """Solve ``p`` exactly up to tolerances.

    Raises :class:`NumericalFailure` instead of returning a solution whose
    constraint residual exceeds the feasibility tolerance.
    """
    iterate = _kernel.get_iterate(backend)
    if np.any(p.lb > p.ub + tol.feasibility):
        return SolveResult(Status.INFEASIBLE)
    cols, signs, shifts, u, A, b, c = _standard_form(p)
    m, n1 = A.shape

    # slack per inequality, then make the right-hand side non-negative
    slack_rows = [i for i, s in enumerate(p.senses) if s != EQ]
    n_slack = len(slack_rows)
    S = np.zeros((m, n_slack))
    for k, i in enumerate(slack_rows):
        S[i, k] = 1.0 if p.senses[i] == LE else -1.0
    flip = b < 0
    A = A.copy()
    A[flip] *= -1.0
    S[flip] *= -1.0
    b = np.abs(b)

    basis = np.empty(m, dtype=np.int64)
    need_art = []
    slack_of_row = {i: k for k, i in enumerate(slack_rows)}
    for i in range(m):
        k = slack_of_row.get(i)
        if k is not None and S[i, k] == 1.0:
            basis[i] = n1 + k
        else:
            need_art.append(i)
    n_art = len(need_art)
    Art = np.zeros((m, n_art))
    for k, i in enumerate(need_art):
        Art[i, k] = 1.0
        basis[i] = n1 + n_slack + k

    full = np.hstack([A, S, Art])
    N = full.shape[1]
    ub = np.concatenate([u, np.full(n_slack + n_art, math.inf)])
    T = np.ascontiguousarray(full.copy())
    beta = b.copy()
    is_basic = np.zeros(N, dtype=np.uint8)
    is_basic[basis] = 1
    at_upper = np.zeros(N, dtype=np.uint8)
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    total_it = 0
    bland = False
    scale = max(1.0, float(np.max(b, initial=0.0)))

    if n_art:
        c1 = np.zeros(N)
        c1[n1 + n_slack:] = 1.0
        d = c1 - c1[basis] @ T
        status, it, bland = iterate(T, beta, d, basis, is_basic, at_upper, ub,
                                    max_iter, tol.reduced_cost, tol.pivot,
                                    tol.degenerate_threshold, bland)
        total_it += it
        if status == ITERATION_LIMIT:
            raise NumericalFailure("simplex iteration limit in phase 1")
        infeas = float(np.sum(beta[basis >= n1 + n_slack]))
        if infeas > tol.feasibility * scale:
            return SolveResult(Status.INFEASIBLE, iterations=total_it)
        # drop nonbasic artificials; pin basic ones to zero
        art_start = n1 + n_slack
        keep = np.ones(N, dtype=bool)
        keep[art_start:] = is_basic[art_start:] == 1
        remap = -np.ones(N, dtype=np.int64)
        remap[keep] = np.arange(int(keep.sum()))
        T = np.ascontiguousarray(T[:, keep])
        full = full[:, keep]
        ub = ub[keep].copy()
        at_upper = at_upper[keep].copy()
        is_basic = is_basic[keep].copy()
        basis = remap[basis]
        ub[art_start:] = 0.0
        N = T.shape[1]

    c2 = np.zeros(N)
    c2[:n1] = c
    d = c2 - c2[basis] @ T
    status, it, bland = iterate(T, beta, d, basis, is_basic, at_upper, ub,
                                max_iter, tol.reduced_cost, tol.pivot,
                                tol.degenerate_threshold, bland)
    total_it += it
    if status == ITERATION_LIMIT:
        raise NumericalFailure("simplex iteration limit in phase 2")
    if status == UNBOUNDED:
        return SolveResult(Status.UNBOUNDED, iterations=total_it)

    xs = np.where(at_upper == 1, ub, 0.0)
    xs[basis] = beta
    if m:
        # recompute basic values from the original columns
        nonbasic = np.ones(N, dtype=bool)
        nonbasic[basis] = False
        resid = b - full[:, nonbasic] @ xs[nonbasic]
        try:
            xb = np.linalg.solve(full[:, basis], resid)
        except np.linalg.LinAlgError:
            xb = beta
        if np.all(np.isfinite(xb)):
            xs[basis] = xb
    xs = np.clip(xs, 0.0, ub)

    x = shifts.copy()
    np.add.at(x, cols, signs * xs[:n1])
    x = np.clip(x, p.lb, p.ub)
    viol = p.max_violation(x)
    limit = tol.feasibility * max(scale, 1.0 + float(np.max(np.abs(x), initial=0.0)))
    if viol > max(limit, 10 * tol.feasibility):
        raise NumericalFailure(f"solution residual {viol:.3g} exceeds tolerance")
    value = float(p.c @ x) + p.constant
    return SolveResult(Status.OPTIMAL, value, x, iterations=total_it,
                       stats={"bland": bool(bland)})
