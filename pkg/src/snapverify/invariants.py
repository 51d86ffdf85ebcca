"""Linear invariants over memory units: checking and inference.

An invariant for memory unit ``u`` claims

    alpha_l * (t - 1) <= memory_u at step t <= alpha_u * (t - 1)

for every step up to the horizon. The base case (t = 1, memory 0) always
holds, so certification only needs the inductive step, which is one
feed-forward query per unit and direction over the snapshot network.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .ffnn_verifier import propagate_bounds, verify
from .network import RELU, TIME, hidden_name, memory_name, output_name, snapshot
from .props import FfnnQuery, LinExpr, derive_box, ge, le, var
from .solver import GE, LE, LinearModel, Status, TimeBudgetExceeded, solve_milp
from .timing import PhaseTimer

UPPER, LOWER = "upper", "lower"
DEFAULT_EPSILON = 0.01
DEFAULT_EPSILON_TIGHTEN = 0.1
M_FLOOR, M_CAP = 1e3, 1e6

# Callbacks ``f(net, P, t_max, invariants)`` run for every certified set.
on_certified = []


@dataclass(frozen=True)
class LinearInvariant:
    unit: tuple
    alpha_l: float
    alpha_u: float

    def __post_init__(self):
        if not self.alpha_l <= self.alpha_u:
            raise ValueError(f"alpha_l {self.alpha_l} exceeds alpha_u {self.alpha_u}")

    @property
    def name(self):
        return memory_name(*self.unit)

    def bounds_at(self, t):
        return self.alpha_l * (t - 1), self.alpha_u * (t - 1)

    def constraints(self, name=None, time=None):
        """``[mem >= alpha_l (t-1), mem <= alpha_u (t-1)]`` as constraints."""
        v = var(name or self.name)
        tt = var(TIME) if time is None else LinExpr.of(time)
        return (ge(v, self.alpha_l * (tt - 1)), le(v, self.alpha_u * (tt - 1)))


@dataclass(frozen=True)
class InvariantSet:
    items: tuple = ()

    def __post_init__(self):
        items = tuple(sorted(self.items, key=lambda inv: inv.unit))
        units = [inv.unit for inv in items]
        if len(set(units)) != len(units):
            raise ValueError("at most one invariant per memory unit")
        object.__setattr__(self, "items", items)

    @classmethod
    def of(cls, invs):
        return cls(tuple(invs))

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def get(self, unit):
        for inv in self.items:
            if inv.unit == unit:
                return inv
        return None

    def units(self):
        return [inv.unit for inv in self.items]

    def layer(self, L):
        return InvariantSet(tuple(inv for inv in self.items if inv.unit[0] == L))

    def before(self, L):
        return InvariantSet(tuple(inv for inv in self.items if inv.unit[0] < L))

    def merge(self, other):
        """``other`` overrides units it covers."""
        keep = {inv.unit: inv for inv in self.items}
        keep.update({inv.unit: inv for inv in other})
        return InvariantSet(tuple(keep.values()))

    def constraints(self):
        return tuple(c for inv in self.items for c in inv.constraints())

    def alphas(self):
        return {inv.unit: (inv.alpha_l, inv.alpha_u) for inv in self.items}

    def to_dict(self):
        return [{"unit": memory_name(*inv.unit), "alpha_l": inv.alpha_l,
                 "alpha_u": inv.alpha_u} for inv in self.items]


def _neuron_name(net, unit):
    L, j = unit
    return output_name(j) if L == net.n_layers else hidden_name(L, j)


def _is_relu(net, unit):
    return net.layers[unit[0] - 1].activation == RELU


def structural_facts(net):
    """Memory of a ReLU unit is a stored ReLU output, hence non-negative."""
    return tuple(ge(memory_name(*u), 0.0) for u in net.memory_units() if _is_relu(net, u))


@dataclass
class PhiQuery:
    unit: tuple
    direction: str
    query: FfnnQuery


def build_phi_i(net, P, proven, candidate, t_max, snap=None):
    """Inductive-step queries for ``candidate``; all UNSAT means certified.

    Each query assumes P, a whole step ``1 <= t <= t_max - 1``, the proven invariants of
    earlier layers and the candidate itself, and asks whether the candidate
    bound fails one step later for the unit's neuron. The lower query of a
    ReLU unit with ``alpha_l <= 0`` is omitted: the neuron is a ReLU output,
    so ``v >= 0 >= alpha_l * t`` holds outright.
    """
    if t_max < 2:
        return []
    layers = sorted({u[0] for u in candidate.units()})
    covered = set(proven.units()) | set(candidate.units())
    for L in range(1, max(layers, default=0)):
        for u in net.memory_units():
            if u[0] == L and u not in covered:
                raise ValueError(f"memory unit {memory_name(*u)} of an earlier layer "
                                 "has no proven invariant")
    snap = snap or snapshot(net)
    t = var(TIME)
    base = (tuple(P.constraints) + (ge(t, 1), le(t, t_max - 1))
            + structural_facts(net) + proven.constraints() + candidate.constraints())
    out = []
    for inv in candidate:
        v = var(_neuron_name(net, inv.unit))
        out.append(PhiQuery(inv.unit, UPPER,
                            FfnnQuery(base, snap.ffnn, (ge(v, inv.alpha_u * t),), (TIME,))))
        if _is_relu(net, inv.unit) and inv.alpha_l <= 0.0:
            continue
        out.append(PhiQuery(inv.unit, LOWER,
                            FfnnQuery(base, snap.ffnn, (le(v, inv.alpha_l * t),), (TIME,))))
    return out


@dataclass
class CheckResult:
    certified: bool
    unit: tuple = None
    direction: str = None
    witness: dict = None


def check_invariant(queries, time_budget=None, timer=None):
    """Certified iff every query is UNSAT; otherwise the first refutation."""
    for pq in queries:
        if timer is not None:
            with timer.engine_call():
                res = verify(pq.query, time_budget=time_budget)
        else:
            res = verify(pq.query, time_budget=time_budget)
        if res.sat:
            return CheckResult(False, pq.unit, pq.direction, res.assignment)
    return CheckResult(True)


class InferenceContext:
    """Shared state for one RNN query: snapshot, timing, engine budget."""

    def __init__(self, q, time_budget=None, timer=None, falsifier=None):
        self.q = q
        self.net = q.net
        self.P = q.P
        self.t_max = q.t_max
        self.snap = snapshot(q.net)
        self.time_budget = time_budget
        self.timer = timer or PhaseTimer()
        self.falsifier = falsifier
        self.certified_sets = []

    def certify(self, proven, candidate):
        with self.timer.phase("phi_checks"):
            queries = build_phi_i(self.net, self.P, proven, candidate, self.t_max, self.snap)
            res = check_invariant(queries, self.time_budget, self.timer)
        if res.certified:
            full = proven.merge(candidate)
            self.certified_sets.append(full)
            for f in on_certified:
                f(self.net, self.P, self.t_max, full)
        return res

    def snapshot_query(self, invariants):
        """``(sat, witness)`` for the snapshot query under ``invariants``."""
        q = self.q
        t = var(TIME)
        if q.Q.fixed_step is not None:
            t_range = (ge(t, q.Q.fixed_step), le(t, q.Q.fixed_step))
        else:
            t_range = (ge(t, 1), le(t, q.t_max))
        P_hat = (tuple(q.P.constraints) + t_range + structural_facts(self.net)
                 + invariants.constraints())
        with self.timer.phase("snapshot"):
            for disjunct in q.Q.disjuncts:
                fq = FfnnQuery(P_hat, self.snap.ffnn, disjunct, (TIME,))
                with self.timer.engine_call():
                    res = verify(fq, time_budget=self.time_budget)
                if res.sat:
                    return True, res.assignment
        return False, None

    def falsify(self, witness):
        if self.falsifier is None:
            return None
        with self.timer.phase("falsify"):
            return self.falsifier(self.q, witness)

    def input_box(self, t_lo, t_hi):
        return derive_box(self.P, t_range=(t_lo, t_hi), variables=self.net.input_names())


def affine_bounds(net, P, proven, layer, t, snap=None):
    """Concrete intervals for every neuron of layers ``1..layer`` at step ``t``.

    Memory of proven units is bounded by its invariant at ``t``; other
    memory units of ReLU layers are only known to be non-negative.
    Returns ``{neuron name: (lo, hi)}``.
    """
    snap = snap or snapshot(net)
    box = derive_box(P, t_range=(t, t), variables=net.input_names())
    for u in net.memory_units():
        inv = proven.get(u)
        if inv is not None:
            lo, hi = inv.bounds_at(t)
        else:
            lo, hi = -math.inf, math.inf
        if _is_relu(net, u):
            lo = max(lo, 0.0)
        box[memory_name(*u)] = (lo, hi)
    b = propagate_bounds(snap.ffnn, box)
    out = {}
    for L in range(1, layer + 1):
        for name in net.neuron_names(L):
            out[name] = b.of(name)
    return out


def _pre_activation_range(net, P, proven, unit, t, snap):
    """Interval of ``W v + b`` for ``unit`` at step ``t``, memory excluded."""
    L, j = unit
    if L == 1:
        box = derive_box(P, t_range=(t, t), variables=net.input_names())
        x_lo = np.array([box[n][0] for n in net.input_names()])
        x_hi = np.array([box[n][1] for n in net.input_names()])
    else:
        b = affine_bounds(net, P, proven, L - 1, t, snap)
        names = net.neuron_names(L - 1)
        x_lo = np.array([b[n][0] for n in names])
        x_hi = np.array([b[n][1] for n in names])
    layer = net.layers[L - 1]
    w = layer.W[j]
    lo = layer.b[j] + np.sum(np.where(w > 0, w * x_lo, w * x_hi))
    hi = layer.b[j] + np.sum(np.where(w > 0, w * x_hi, w * x_lo))
    return float(lo), float(hi)


def search_bound(net, P, t_max, unit, snap=None):
    """``M``: memory-free upper bound of the unit's neuron times the horizon."""
    snap = snap or snapshot(net)
    box = derive_box(P, t_range=(1, t_max), variables=net.input_names())
    for u in net.memory_units():
        box[memory_name(*u)] = (0.0, 0.0)
    lo, hi = propagate_bounds(snap.ffnn, box).of(_neuron_name(net, unit))
    m = max(abs(lo), abs(hi)) * t_max
    return float(min(max(m, M_FLOOR), M_CAP))


@dataclass
class Outcome:
    """Result of an inference algorithm.

    ``status`` is ``"holds"``, ``"fail"`` or ``"violated"`` (a concrete
    counterexample was found by the falsifier).
    """

    status: str
    invariants: InvariantSet = None
    trace: object = None
    step: int = None
    reason: str = ""
    history: list = field(default_factory=list)
    refinements: int = 0


def _single_upper(net, unit, alpha_u):
    lower = min(0.0, alpha_u) if _is_relu(net, unit) else alpha_u
    return LinearInvariant(unit, lower, alpha_u)


def alg1(ctx, M=None, epsilon=DEFAULT_EPSILON):
    """Binary search on the upper slope of the only memory unit."""
    units = ctx.net.memory_units()
    if len(units) != 1:
        raise ValueError("binary search needs exactly one memory unit")
    unit = units[0]
    if not _is_relu(ctx.net, unit):
        raise ValueError("binary search covers memory units of ReLU layers")
    if M is None:
        M = search_bound(ctx.net, ctx.P, ctx.t_max, unit, ctx.snap)
    lb, ub = -M, M
    history = []
    empty = InvariantSet()
    try:
        while ub - lb >= epsilon:
            a = (ub + lb) / 2.0
            cand = InvariantSet.of([_single_upper(ctx.net, unit, a)])
            check = ctx.certify(empty, cand)
            if not check.certified:
                history.append((a, "refuted"))
                lb = a
                continue
            sat, witness = ctx.snapshot_query(cand)
            if not sat:
                history.append((a, "holds"))
                return Outcome("holds", cand, history=history)
            history.append((a, "weak"))
            found = ctx.falsify(witness)
            if found is not None:
                return Outcome("violated", cand, found[0], found[1], history=history)
            ub = a
    except TimeBudgetExceeded as exc:
        return Outcome("fail", reason=f"engine time budget exceeded ({exc})", history=history)
    return Outcome("fail", reason="search range exhausted", history=history)


def alg2(ctx, M=None, epsilon=DEFAULT_EPSILON, max_doublings=40):
    """Layer-by-layer binary search, one memory unit per layer.

    Each layer starts from a loose slope ``M_i * i``; if that is refuted it
    is doubled a bounded number of times before giving up. When a layer's
    slope improves, the lower search ends of later layers are reset, since
    their refutations were obtained under the looser assumption.
    """
    net = ctx.net
    units = net.memory_units()
    layers = [u[0] for u in units]
    if len(set(layers)) != len(layers):
        raise ValueError("layer-by-layer search needs one memory unit per layer")
    if not all(_is_relu(net, u) for u in units):
        raise ValueError("layer-by-layer search covers memory units of ReLU layers")
    history = []
    alpha, lb, ub, lb0 = [], [], [], []
    try:
        for i, unit in enumerate(units, start=1):
            m = M if M is not None else search_bound(net, ctx.P, ctx.t_max, unit, ctx.snap)
            a = m * (i + 1)
            proven = InvariantSet.of(_single_upper(net, u, x) for u, x in zip(units, alpha))
            for _ in range(max_doublings + 1):
                check = ctx.certify(proven, InvariantSet.of([_single_upper(net, unit, a)]))
                history.append((unit, a, "loose-certified" if check.certified else "loose-refuted"))
                if check.certified:
                    break
                a *= 2.0
            else:
                return Outcome("fail", reason=f"no loose invariant for {memory_name(*unit)}",
                               history=history)
            alpha.append(a)
            lb.append(-m * (i + 1))
            lb0.append(-m * (i + 1))
            ub.append(a)

        def current():
            return InvariantSet.of(_single_upper(net, u, x) for u, x in zip(units, alpha))

        rounds = 0
        while True:
            inv = current()
            sat, witness = ctx.snapshot_query(inv)
            if not sat:
                return Outcome("holds", inv, history=history, refinements=rounds)
            found = ctx.falsify(witness)
            if found is not None:
                return Outcome("violated", inv, found[0], found[1], history=history,
                               refinements=rounds)
            progress = False
            for k, unit in enumerate(units):
                if ub[k] - lb[k] <= epsilon:
                    continue
                progress = True
                a = (ub[k] + lb[k]) / 2.0
                proven = InvariantSet.of(_single_upper(net, u, x)
                                         for u, x in zip(units[:k], alpha[:k]))
                check = ctx.certify(proven, InvariantSet.of([_single_upper(net, unit, a)]))
                if check.certified:
                    alpha[k] = ub[k] = a
                    history.append((unit, a, "certified"))
                    for later in range(k + 1, len(units)):
                        lb[later] = lb0[later]
                else:
                    lb[k] = a
                    history.append((unit, a, "refuted"))
            rounds += 1
            if not progress:
                return Outcome("fail", current(), reason="optimal invariants too weak",
                               history=history, refinements=rounds)
    except TimeBudgetExceeded as exc:
        return Outcome("fail", reason=f"engine time budget exceeded ({exc})", history=history)


@dataclass
class Candidate:
    """A layer's inferred invariants plus what is needed to re-solve."""

    invariants: InvariantSet
    optimum: dict
    layer: int
    proven: InvariantSet
    t_subset: tuple
    fixed_lower: object
    margin: float
    extra: tuple = ()
    no_progress: bool = False


class InferenceInfeasible(Exception):
    """No linear invariant of the template satisfies the encoded steps."""


def _layer_units(net, layer):
    return [u for u in net.memory_units() if u[0] == layer]


def _alpha_range(net, P, t_max, units, snap):
    return max(search_bound(net, P, t_max, u, snap) for u in units)


def _solve_alphas(net, P, proven, layer, t_max, t_subset, fixed_lower, margin, extra, snap,
                  time_budget):
    """Optimal slopes for ``layer`` under worst-case interval obligations.

    ``margin`` adds slack to every obligation so the result survives the
    non-strict negation in certification. Returns ``{unit: (lo, hi)}``.
    """
    units = _layer_units(net, layer)
    layer_w = net.layers[layer - 1]
    relu = layer_w.activation == RELU
    A = _alpha_range(net, P, t_max, units, snap)
    model = LinearModel()
    au = {u: model.add_var(-A, A, name=f"au_{u[1]}") for u in units}
    if fixed_lower is None:
        al = {u: model.add_var(-A, A, name=f"al_{u[1]}") for u in units}
    else:
        al = {}
        for u in units:
            v = fixed_lower.get(u) if isinstance(fixed_lower, dict) else fixed_lower
            al[u] = model.add_var(v, v, name=f"al_{u[1]}")
    for u in units:
        model.add_constr({al[u]: 1.0, au[u]: -1.0}, LE, 0.0)
    for kind, u, bound in extra:
        target = au[u] if kind == UPPER else al[u]
        model.add_constr({target: 1.0}, LE if kind == UPPER else GE, bound)
    steps = t_subset if t_subset is not None else range(1, t_max)
    for t in steps:
        for u in units:
            j = u[1]
            c_lo, c_hi = _pre_activation_range(net, P, proven, u, t, snap)
            h = layer_w.H[j]
            # worst case of sum_k H_jk * memory_k over [al (t-1), au (t-1)]
            upper = {au[u]: -float(t)}
            lower = {al[u]: float(t)}
            for k_unit in units:
                w = float(h[k_unit[1]])
                if w == 0.0:
                    continue
                hi_var = au[k_unit] if w > 0 else al[k_unit]
                lo_var = al[k_unit] if w > 0 else au[k_unit]
                upper[hi_var] = upper.get(hi_var, 0.0) + w * (t - 1)
                lower[lo_var] = lower.get(lo_var, 0.0) - w * (t - 1)
            # alpha_u t >= L_max + margin
            model.add_constr(upper, LE, -c_hi - margin)
            if relu:
                model.add_constr({au[u]: float(t)}, GE, margin)
                # alpha_l t <= 0  or  alpha_l t <= L_min - margin, one binary
                z = model.add_var(0.0, 1.0, binary=True, name=f"z_{j}_{t}")
                big = A * t + abs(c_lo) + float(np.sum(np.abs(h))) * A * (t - 1) + margin + 1.0
                model.add_constr({al[u]: float(t), z: -big}, LE, 0.0)
                row = dict(lower)
                row[z] = row.get(z, 0.0) + big
                model.add_constr(row, LE, c_lo - margin + big)
            else:
                model.add_constr(lower, LE, c_lo - margin)
    objective = {}
    for u in units:
        objective[au[u]] = objective.get(au[u], 0.0) + 1.0
        objective[al[u]] = objective.get(al[u], 0.0) - 1.0
    model.set_objective(objective)
    res = solve_milp(model.to_milp(), time_budget=time_budget)
    if res.status is not Status.OPTIMAL:
        raise InferenceInfeasible(f"no linear invariant for layer {layer}")
    return {u: (float(res.x[al[u]]), float(res.x[au[u]])) for u in units}


def infer_milp(net, P, proven, layer, t_max, t_subset=None, fixed_lower=None,
               epsilon=DEFAULT_EPSILON, snap=None, time_budget=None, extra=()):
    """Jointly infer slopes for every memory unit of ``layer`` by MILP.

    The raw optimum is kept in ``Candidate.optimum``; the returned
    invariants come from re-solving with every obligation strict by
    ``max(epsilon / 4, 1e-4)``, which is what certification needs. Raises
    :class:`InferenceInfeasible` when no slopes exist.
    """
    snap = snap or snapshot(net)
    units = _layer_units(net, layer)
    if not units:
        raise ValueError(f"layer {layer} has no memory units")
    margin = max(epsilon / 4.0, 1e-4)
    if t_max < 2 or (t_subset is not None and not t_subset):
        zero = InvariantSet.of(LinearInvariant(u, 0.0, 0.0) for u in units)
        return Candidate(zero, {u: (0.0, 0.0) for u in units}, layer, proven,
                         tuple(t_subset or ()), fixed_lower, margin, tuple(extra))
    args = (net, P, proven, layer, t_max, t_subset, fixed_lower)
    optimum = _solve_alphas(*args, 0.0, extra, snap, time_budget)
    try:
        strict = _solve_alphas(*args, margin, extra, snap, time_budget)
    except InferenceInfeasible:
        # fall back to bumping the raw optimum outward
        strict = {u: (lo - margin, hi + margin) for u, (lo, hi) in optimum.items()}
    invs = []
    for u, (lo, hi) in strict.items():
        if fixed_lower is not None:
            lo = optimum[u][0]
        invs.append(LinearInvariant(u, min(lo, hi), hi))
    return Candidate(InvariantSet.of(invs), optimum, layer, proven,
                     None if t_subset is None else tuple(t_subset), fixed_lower, margin,
                     tuple(extra))


def strengthen_milp(net, P, t_max, previous, epsilon_tighten=DEFAULT_EPSILON_TIGHTEN,
                    snap=None, time_budget=None, proven=None):
    """Re-infer ``previous.layer`` demanding every slope tighten by ``epsilon_tighten``.

    Lower slopes that were fixed by the caller stay fixed. ``proven`` may
    replace the earlier-layer invariants used before, if they have since
    been tightened. Raises
    :class:`InferenceInfeasible` when no tighter invariant exists.
    """
    if epsilon_tighten < 0:
        raise ValueError("epsilon_tighten must be non-negative")
    if epsilon_tighten == 0:
        return replace(previous, no_progress=True)
    extra = list(previous.extra)
    for inv in previous.invariants:
        extra.append((UPPER, inv.unit, inv.alpha_u - epsilon_tighten))
        if previous.fixed_lower is None:
            extra.append((LOWER, inv.unit, inv.alpha_l + epsilon_tighten))
    proven = previous.proven if proven is None else proven
    return infer_milp(net, P, proven, previous.layer, t_max,
                      t_subset=previous.t_subset, fixed_lower=previous.fixed_lower,
                      epsilon=previous.margin * 4.0, snap=snap, time_budget=time_budget,
                      extra=tuple(extra))


@dataclass(frozen=True)
class Failure:
    """Why a candidate was rejected.

    ``kind`` is ``"refuted"`` (with the failing ``unit`` and ``direction``)
    or ``"snapshot"``; for the latter ``cursor`` picks which bound to tighten
    in round-robin order over :func:`adjustable_bounds`.
    """

    kind: str
    unit: tuple = None
    direction: str = None
    cursor: int = 0


def adjustable_bounds(net, invariants):
    out = []
    for inv in invariants:
        out.append((inv.unit, UPPER))
        out.append((inv.unit, LOWER))
    return out


def incremental_adjust(invariants, failure, step, net=None):
    """Move one slope by ``step``: weaken on refutation, tighten otherwise."""
    if step <= 0:
        raise ValueError("step must be positive")
    if failure.kind == "refuted":
        unit, direction = failure.unit, failure.direction
        delta = step if direction == UPPER else -step
    elif failure.kind == "snapshot":
        bounds = adjustable_bounds(net, invariants)
        unit, direction = bounds[failure.cursor % len(bounds)]
        delta = -step if direction == UPPER else step
    else:
        raise ValueError(f"unknown failure kind {failure.kind!r}")
    inv = invariants.get(unit)
    lo, hi = inv.alpha_l, inv.alpha_u
    if direction == UPPER:
        hi = max(hi + delta, lo)
    else:
        lo = min(lo + delta, hi)
    return invariants.merge([LinearInvariant(unit, lo, hi)])
