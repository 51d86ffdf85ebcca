"""Linear constraints, properties, queries and verdicts."""
from dataclasses import dataclass, field
from enum import Enum
import math
import numbers

import numpy as np

from .network import TIME, FfnnNetwork, RnnNetwork

LE, GE, EQ = "<=", ">=", "=="
RELATIONS = (LE, GE, EQ)


class PropertyError(ValueError):
    pass


class UnboundedVariable(PropertyError):
    def __init__(self, var):
        super().__init__(f"variable {var!r} has no finite bound")
        self.var = var


class InfeasibleConstraints(PropertyError):
    pass


@dataclass(frozen=True)
class LinExpr:
    """``sum(coef * var) + constant`` with terms sorted by variable name."""

    terms: tuple = ()
    constant: float = 0.0

    def __post_init__(self):
        merged = {}
        for v, c in self.terms:
            merged[v] = merged.get(v, 0.0) + float(c)
        object.__setattr__(self, "terms",
                           tuple(sorted((v, c) for v, c in merged.items() if c != 0.0)))
        object.__setattr__(self, "constant", float(self.constant))

    @classmethod
    def of(cls, x):
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, str):
            return cls(((x, 1.0),))
        if isinstance(x, numbers.Real):
            return cls((), float(x))
        raise TypeError(f"cannot build a linear expression from {x!r}")

    @property
    def coeffs(self):
        return dict(self.terms)

    @property
    def variables(self):
        return tuple(v for v, _ in self.terms)

    def coef(self, var):
        return self.coeffs.get(var, 0.0)

    def __add__(self, other):
        other = LinExpr.of(other)
        return LinExpr(self.terms + other.terms, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-LinExpr.of(other))

    def __rsub__(self, other):
        return LinExpr.of(other) - self

    def __mul__(self, k):
        if not isinstance(k, numbers.Real):
            return NotImplemented
        return LinExpr(tuple((v, c * k) for v, c in self.terms), self.constant * k)

    __rmul__ = __mul__

    def substitute(self, var, value):
        """Replace ``var`` by a number or another expression."""
        c = self.coef(var)
        if c == 0.0:
            return self
        rest = LinExpr(tuple((v, k) for v, k in self.terms if v != var), self.constant)
        return rest + LinExpr.of(value) * c

    def rename(self, mapping):
        return LinExpr(tuple((mapping.get(v, v), c) for v, c in self.terms), self.constant)

    def evaluate(self, assignment):
        return self.constant + sum(c * assignment[v] for v, c in self.terms)

    def __str__(self):
        parts = [f"{c!r}*{v}" for v, c in self.terms]
        if self.constant or not parts:
            parts.append(repr(self.constant))
        return " + ".join(parts)


def var(name):
    return LinExpr.of(name)


@dataclass(frozen=True)
class LinConstraint:
    """``expr relation 0``."""

    expr: LinExpr
    relation: str

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise PropertyError(f"unknown relation {self.relation!r}")

    @property
    def variables(self):
        return self.expr.variables

    def substitute(self, v, value):
        return LinConstraint(self.expr.substitute(v, value), self.relation)

    def rename(self, mapping):
        return LinConstraint(self.expr.rename(mapping), self.relation)

    def slack(self, assignment):
        """Signed satisfaction margin; negative means violated."""
        val = self.expr.evaluate(assignment)
        if self.relation == LE:
            return -val
        if self.relation == GE:
            return val
        return -abs(val)

    def holds(self, assignment, tol=0.0):
        return self.slack(assignment) >= -tol

    def __str__(self):
        return f"{self.expr} {self.relation} 0"


def _rel(lhs, rhs, relation):
    return LinConstraint(LinExpr.of(lhs) - LinExpr.of(rhs), relation)


def le(lhs, rhs):
    return _rel(lhs, rhs, LE)


def ge(lhs, rhs):
    return _rel(lhs, rhs, GE)


def eq(lhs, rhs):
    return _rel(lhs, rhs, EQ)


def box(name, lo, hi):
    return (ge(name, lo), le(name, hi))


def negate_bound(c):
    """Non-strict negation: ``e <= 0`` becomes ``e >= 0`` and vice versa."""
    if c.relation == LE:
        return LinConstraint(c.expr, GE)
    if c.relation == GE:
        return LinConstraint(c.expr, LE)
    raise PropertyError("an equality has no single-constraint negation")


def _check_step(t, t_max):
    if t < 1 or (t_max is not None and t > t_max):
        raise PropertyError(f"time step {t} outside 1..{t_max}")


@dataclass(frozen=True)
class InputProperty:
    """Conjunction over input variables (and ``t``) applied at every step."""

    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def variables(self):
        return sorted({v for c in self.constraints for v in c.variables})


@dataclass(frozen=True)
class OutputProperty:
    """Disjunction of conjunctions, at any step or only at ``fixed_step``."""

    disjuncts: tuple
    fixed_step: int = None

    def __post_init__(self):
        disj = tuple(tuple(d) for d in self.disjuncts)
        if not disj:
            raise PropertyError("an output property needs at least one disjunct")
        object.__setattr__(self, "disjuncts", disj)

    @property
    def variables(self):
        return sorted({v for d in self.disjuncts for c in d for v in c.variables})

    def steps(self, t_max):
        return [self.fixed_step] if self.fixed_step is not None else list(range(1, t_max + 1))


def instantiate_at(prop, t, t_max=None):
    """Fold ``t`` into the constants.

    Returns a tuple of constraints for an :class:`InputProperty` and a tuple
    of disjuncts for an :class:`OutputProperty`.
    """
    _check_step(t, t_max)
    if isinstance(prop, InputProperty):
        return tuple(c.substitute(TIME, t) for c in prop.constraints)
    if isinstance(prop, OutputProperty):
        return tuple(tuple(c.substitute(TIME, t) for c in d) for d in prop.disjuncts)
    return tuple(c.substitute(TIME, t) for c in prop)


@dataclass(frozen=True, eq=False)
class RnnQuery:
    P: InputProperty
    net: RnnNetwork
    Q: OutputProperty
    t_max: int

    def __post_init__(self):
        if self.t_max < 1:
            raise PropertyError("t_max must be at least 1")
        if self.Q.fixed_step is not None and not 1 <= self.Q.fixed_step <= self.t_max:
            raise PropertyError(f"fixed step {self.Q.fixed_step} outside 1..{self.t_max}")
        inputs = set(self.net.input_names()) | {TIME}
        stray = [v for v in self.P.variables if v not in inputs]
        if stray:
            raise PropertyError(f"input property mentions non-input {stray[0]!r}")
        neurons = set(inputs)
        for L in range(1, self.net.n_layers + 1):
            neurons.update(self.net.neuron_names(L))
        stray = [v for v in self.Q.variables if v not in neurons]
        if stray:
            raise PropertyError(f"output property mentions unknown neuron {stray[0]!r}")

    def holds_at(self, trace, t, tol=0.0):
        """True iff ``trace`` satisfies P at every step up to ``t`` and Q at ``t``."""
        for s in range(1, t + 1):
            a = trace.assignment(s)
            if not all(c.holds(a, tol) for c in self.P.constraints):
                return False
        a = trace.assignment(t)
        return any(all(c.holds(a, tol) for c in d) for d in self.Q.disjuncts)

    def violation_step(self, trace, tol=0.0):
        """First step in scope at which ``trace`` is a counterexample, else None."""
        steps = self.Q.steps(self.t_max)
        for t in range(1, min(trace.length, self.t_max) + 1):
            a = trace.assignment(t)
            if not all(c.holds(a, tol) for c in self.P.constraints):
                return None
            if t in steps and any(all(c.holds(a, tol) for c in d) for d in self.Q.disjuncts):
                return t
        return None


@dataclass(frozen=True, eq=False)
class FfnnQuery:
    """``exists x: P(x) and Q(N(x))``; inputs named in ``integers`` take whole values."""

    P: tuple
    net: FfnnNetwork
    Q: tuple
    integers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "P", tuple(self.P))
        object.__setattr__(self, "Q", tuple(self.Q))
        object.__setattr__(self, "integers", tuple(self.integers))
        inputs = set(self.net.input_names)
        for v in self.integers:
            if v not in inputs:
                raise PropertyError(f"integer variable {v!r} is not an input")
        for c in self.P:
            for v in c.variables:
                if v not in inputs:
                    raise PropertyError(f"input constraint mentions non-input {v!r}")
        for c in self.Q:
            for v in c.variables:
                if v not in self.net.index:
                    raise PropertyError(f"output constraint mentions unknown neuron {v!r}")


class VerdictKind(Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    UNKNOWN = "unknown"
    ERROR = "error"


@dataclass
class Verdict:
    kind: VerdictKind
    witness: object = None
    step: int = None
    reason: str = ""
    timing: dict = field(default_factory=dict)
    invariants: object = None

    @property
    def holds(self):
        return self.kind is VerdictKind.HOLDS

    @property
    def violated(self):
        return self.kind is VerdictKind.VIOLATED


def _rows(constraints, names):
    col = {v: i for i, v in enumerate(names)}
    A = np.zeros((len(constraints), len(names)))
    rhs = np.zeros(len(constraints))
    rels = []
    for r, c in enumerate(constraints):
        for v, k in c.expr.terms:
            A[r, col[v]] = k
        rhs[r] = -c.expr.constant
        rels.append(c.relation)
    return A, rhs, rels


def _propagate(A, rhs, rels, lo, hi, rounds=50):
    """Feasibility-based bound tightening on ``A x rel rhs``."""
    rows = []
    for r, rel in enumerate(rels):
        if rel in (LE, EQ):
            rows.append((A[r], rhs[r]))
        if rel in (GE, EQ):
            rows.append((-A[r], -rhs[r]))
    for _ in range(rounds):
        changed = False
        for a, b in rows:
            nz = np.flatnonzero(a)
            # min activity of a.x over the box, per term
            mins = np.where(a[nz] > 0, a[nz] * lo[nz], a[nz] * hi[nz])
            inf_count = int(np.sum(~np.isfinite(mins)))
            finite_sum = float(np.sum(mins[np.isfinite(mins)]))
            for k, i in enumerate(nz):
                if inf_count > 1 or (inf_count == 1 and np.isfinite(mins[k])):
                    continue
                rest = finite_sum - (mins[k] if np.isfinite(mins[k]) else 0.0)
                bound = (b - rest) / a[i]
                if a[i] > 0 and bound < hi[i] - 1e-12 * max(1.0, abs(bound)):
                    hi[i] = bound
                    changed = True
                elif a[i] < 0 and bound > lo[i] + 1e-12 * max(1.0, abs(bound)):
                    lo[i] = bound
                    changed = True
                if lo[i] > hi[i] + 1e-9 * max(1.0, abs(lo[i]), abs(hi[i])):
                    raise InfeasibleConstraints("constraints have no solution")
        if not changed:
            break
    return lo, hi


def derive_box(constraints, t_range=None, variables=()):
    """Interval bounds implied by a conjunction of linear constraints.

    Bounds come from propagation; any variable left unbounded is bounded by
    optimising it with an LP over the constraints. ``t_range`` bounds the
    time variable. When ``variables`` is given only those must be bounded;
    other variables may come back infinite. Returns ``{name: (lo, hi)}``.
    """
    from .solver import LpProblem, Status, solve_lp

    if isinstance(constraints, InputProperty):
        constraints = constraints.constraints
    constraints = tuple(constraints)
    names = sorted({v for c in constraints for v in c.variables} | set(variables)
                   | ({TIME} if t_range is not None else set()))
    n = len(names)
    lo = np.full(n, -math.inf)
    hi = np.full(n, math.inf)
    if t_range is not None:
        k = names.index(TIME)
        lo[k], hi[k] = float(t_range[0]), float(t_range[1])
        if lo[k] > hi[k]:
            raise InfeasibleConstraints("empty time range")
    if not n:
        return {}
    A, rhs, rels = _rows(constraints, names)
    lo, hi = _propagate(A, rhs, rels, lo, hi)
    if variables:
        required = set(variables) | ({TIME} if t_range is not None else set())
    else:
        required = set(names)
    for i in range(n):
        if names[i] not in required:
            continue
        for maximize in (False, True):
            if np.isfinite(hi[i] if maximize else lo[i]):
                continue
            c = np.zeros(n)
            c[i] = 1.0
            res = solve_lp(LpProblem(c, A, rels, rhs, lo, hi, maximize=maximize))
            if res.status is Status.INFEASIBLE:
                raise InfeasibleConstraints("constraints have no solution")
            if res.status is Status.UNBOUNDED:
                raise UnboundedVariable(names[i])
            if maximize:
                hi[i] = res.value
            else:
                lo[i] = res.value
    return {v: (float(lo[i]), float(hi[i])) for i, v in enumerate(names)}
