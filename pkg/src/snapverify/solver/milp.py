"""Branch-and-bound over binary variables, a model builder, and big-M ReLU."""
from dataclasses import dataclass
import math
import time

import numpy as np

from .lp import (DEFAULT_TOLERANCES, EQ, GE, LE, LpProblem, SolveResult,
                 Status, TimeBudgetExceeded, solve_lp)


@dataclass(eq=False)
class MilpProblem:
    lp: LpProblem
    binaries: tuple

    def __post_init__(self):
        self.binaries = tuple(int(i) for i in self.binaries)
        for i in self.binaries:
            if self.lp.lb[i] < 0.0 or self.lp.ub[i] > 1.0:
                raise ValueError(f"binary variable {i} must have bounds within [0, 1]")

    def relaxation(self):
        return self.lp


class LinearModel:
    """Incremental builder for :class:`LpProblem` / :class:`MilpProblem`.

    Coefficients are given either as a ``{index: coef}`` mapping or as a
    dense vector indexed by variable (shorter vectors are zero-padded).
    """

    def __init__(self):
        self.lb = []
        self.ub = []
        self.names = []
        self.binaries = []
        self._rows = []
        self._objective = {}
        self.maximize = False
        self.obj_constant = 0.0

    @property
    def n_vars(self):
        return len(self.lb)

    def add_var(self, lb=0.0, ub=math.inf, binary=False, name=None):
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
            self.binaries.append(len(self.lb))
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.names.append(name if name is not None else f"x{len(self.names)}")
        return len(self.lb) - 1

    def add_constr(self, coeffs, sense, rhs):
        if sense not in (LE, GE, EQ):
            raise ValueError(f"unknown sense {sense!r}")
        if isinstance(coeffs, dict):
            idx = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
            val = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        else:
            vec = np.asarray(coeffs, dtype=float)
            idx = np.flatnonzero(vec)
            val = vec[idx]
        self._rows.append((idx, val, sense, float(rhs)))
        return len(self._rows) - 1

    def set_objective(self, coeffs, maximize=False, constant=0.0):
        if isinstance(coeffs, dict):
            self._objective = dict(coeffs)
        else:
            vec = np.asarray(coeffs, dtype=float)
            self._objective = {int(i): float(vec[i]) for i in np.flatnonzero(vec)}
        self.maximize = maximize
        self.obj_constant = constant

    def to_lp(self):
        n = self.n_vars
        A = np.zeros((len(self._rows), n))
        senses, rhs = [], []
        for r, (idx, val, sense, b) in enumerate(self._rows):
            np.add.at(A[r], idx, val)
            senses.append(sense)
            rhs.append(b)
        c = np.zeros(n)
        for i, v in self._objective.items():
            c[i] += v
        return LpProblem(c, A, senses, rhs, self.lb, self.ub, self.maximize,
                         self.obj_constant, tuple(self.names))

    def to_milp(self):
        return MilpProblem(self.to_lp(), tuple(self.binaries))


def _affine(expr):
    """Normalise a variable index or ``(coeffs, constant)`` pair."""
    if isinstance(expr, (int, np.integer)):
        return {int(expr): 1.0}, 0.0
    coeffs, const = expr
    if not isinstance(coeffs, dict):
        vec = np.asarray(coeffs, dtype=float)
        coeffs = {int(i): float(vec[i]) for i in np.flatnonzero(vec)}
    return dict(coeffs), float(const)


def _combine(*terms):
    out = {}
    for scale, coeffs in terms:
        for i, v in coeffs.items():
            out[i] = out.get(i, 0.0) + scale * v
    return out


def encode_relu(model, x, y, lower, upper):
    """Constrain ``y = max(0, x)`` for ``x`` in ``[lower, upper]``.

    ``x`` is a variable index or an affine ``(coeffs, constant)`` pair and
    ``y`` a variable index. Sign-stable ranges are encoded without a binary;
    otherwise one binary ``delta`` (1 = active) is added and returned.
    """
    if not (math.isfinite(lower) and math.isfinite(upper)):
        raise ValueError("big-M ReLU encoding needs finite bounds")
    if lower > upper:
        raise ValueError("empty ReLU input range")
    xc, x0 = _affine(x)
    yc = {int(y): 1.0}
    if lower >= 0.0:
        model.add_constr(_combine((1.0, yc), (-1.0, xc)), EQ, x0)
        return None
    if upper <= 0.0:
        model.add_constr(yc, EQ, 0.0)
        return None
    delta = model.add_var(0.0, 1.0, binary=True)
    # y >= x
    model.add_constr(_combine((1.0, yc), (-1.0, xc)), GE, x0)
    # y >= 0
    model.add_constr(yc, GE, 0.0)
    # y <= x - lower * (1 - delta)
    model.add_constr(_combine((1.0, yc), (-1.0, xc), (-lower, {delta: 1.0})), LE,
                     x0 - lower)
    # y <= upper * delta
    model.add_constr(_combine((1.0, yc), (-upper, {delta: 1.0})), LE, 0.0)
    return delta


class _Node:
    __slots__ = ("bound", "seq", "lo", "hi", "depth")

    def __init__(self, bound, seq, lo, hi, depth):
        self.bound = bound
        self.seq = seq
        self.lo = lo
        self.hi = hi
        self.depth = depth


def solve_milp(p, time_budget=None, tol=DEFAULT_TOLERANCES, node_limit=None,
               backend=None):
    """Exact branch-and-bound on the binary variables of ``p``.

    Depth-first until the first incumbent, then best-bound restarts each
    followed by a dive. Branching picks the most fractional binary, lowest
    index on ties. Raises :class:`TimeBudgetExceeded` when out of time.
    """
    start = time.perf_counter()
    lp = p.lp
    bins = np.asarray(p.binaries, dtype=np.int64)
    sign = -1.0 if lp.maximize else 1.0
    incumbent = None
    inc_val = math.inf  # minimisation form
    nodes = 0
    iterations = 0
    seq = 0
    open_nodes = []
    root = _Node(-math.inf, seq, lp.lb[bins].copy(), lp.ub[bins].copy(), 0)
    dive = root

    def gap_closed(val):
        return val >= inc_val - tol.optimality * max(1.0, abs(inc_val))

    while dive is not None or open_nodes:
        if time_budget is not None and time.perf_counter() - start > time_budget:
            raise TimeBudgetExceeded(nodes=nodes)
        if node_limit is not None and nodes >= node_limit:
            raise TimeBudgetExceeded("node limit reached", nodes=nodes)
        if dive is not None:
            node, dive = dive, None
        elif incumbent is None:
            k = max(range(len(open_nodes)), key=lambda i: open_nodes[i].seq)
            node = open_nodes.pop(k)
        else:
            k = min(range(len(open_nodes)),
                    key=lambda i: (open_nodes[i].bound, open_nodes[i].seq))
            node = open_nodes.pop(k)
        if incumbent is not None and gap_closed(node.bound):
            continue

        lb = lp.lb.copy()
        ub = lp.ub.copy()
        lb[bins] = node.lo
        ub[bins] = node.hi
        res = solve_lp(lp.with_bounds(lb, ub), tol, backend)
        nodes += 1
        iterations += res.iterations
        if res.status is Status.INFEASIBLE:
            continue
        if res.status is Status.UNBOUNDED:
            return SolveResult(Status.UNBOUNDED, iterations=iterations, nodes=nodes)
        val = sign * res.value
        if incumbent is not None and gap_closed(val):
            continue

        xb = res.x[bins] if bins.size else np.zeros(0)
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        if not bins.size or float(frac.max()) <= tol.integrality:
            x = res.x
            if bins.size:
                rounded = np.round(xb)
                lb[bins] = rounded
                ub[bins] = rounded
                fixed = solve_lp(lp.with_bounds(lb, ub), tol, backend)
                iterations += fixed.iterations
                if fixed.optimal:
                    x = fixed.x
                    val = sign * fixed.value
                else:
                    x = res.x.copy()
                    x[bins] = rounded
            if val < inc_val:
                incumbent, inc_val = x, val
            if not open_nodes or all(gap_closed(o.bound) for o in open_nodes):
                break
            continue

        k = int(np.argmax(frac))
        v = xb[k]
        children = []
        for value in (0.0, 1.0):
            lo, hi = node.lo.copy(), node.hi.copy()
            lo[k] = hi[k] = value
            seq += 1
            children.append(_Node(val, seq, lo, hi, node.depth + 1))
        preferred = children[1] if v >= 0.5 else children[0]
        other = children[0] if v >= 0.5 else children[1]
        open_nodes.append(other)
        dive = preferred

    if incumbent is None:
        return SolveResult(Status.INFEASIBLE, iterations=iterations, nodes=nodes)
    return SolveResult(Status.OPTIMAL, sign * inc_val, incumbent,
                       iterations=iterations, nodes=nodes)


def write_lp(problem, path):
    """Dump ``problem`` (LP or MILP) in CPLEX LP text format for cross-checking."""
    lp = problem.lp if isinstance(problem, MilpProblem) else problem
    binaries = set(problem.binaries) if isinstance(problem, MilpProblem) else set()
    names = lp.names or tuple(f"x{i}" for i in range(lp.n_vars))

    def fmt(row):
        parts = []
        for i in np.flatnonzero(row):
            parts.append(f"{'+' if row[i] >= 0 else '-'} {abs(row[i])!r} {names[i]}")
        return " ".join(parts) if parts else "0 " + names[0]

    sense_map = {LE: "<=", GE: ">=", EQ: "="}
    lines = ["Maximize" if lp.maximize else "Minimize", " obj: " + fmt(lp.c),
             "Subject To"]
    for r in range(lp.n_constraints):
        lines.append(f" c{r}: {fmt(lp.A[r])} {sense_map[lp.senses[r]]} {lp.rhs[r]!r}")
    lines.append("Bounds")
    for i in range(lp.n_vars):
        lo = "-inf" if lp.lb[i] == -math.inf else repr(lp.lb[i])
        hi = "+inf" if lp.ub[i] == math.inf else repr(lp.ub[i])
        lines.append(f" {lo} <= {names[i]} <= {hi}")
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(names[i] for i in sorted(binaries)))
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
