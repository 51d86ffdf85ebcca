"""Complete verification of feed-forward ReLU queries.

``verify`` decides ``exists x: P(x) and Q(N(x))`` with a big-M MILP whose
per-neuron constants come from interval propagation. Cheap filters run
first: an interval check that can prove UNSAT and concrete sampling that
can find a witness. ``verify_exhaustive`` is an independent decision
procedure by enumeration of ReLU phases, meant for cross-checking.
"""
from dataclasses import dataclass, field
import itertools
import math

import numpy as np

from .network import RELU, evaluate_ffnn, evaluate_ffnn_batch
from .props import EQ, GE, LE, FfnnQuery, InfeasibleConstraints, derive_box, eq
from .solver import (LinearModel, LpProblem, NumericalFailure, Status, encode_relu,
                     solve_lp, solve_milp, write_lp)

REPLAY_TOL = 1e-6
MAX_EXHAUSTIVE_RELUS = 14


@dataclass
class NeuronBounds:
    """Pre- and post-activation intervals, one array pair per layer.

    Layer 0 is the input layer (pre == post).
    """

    pre_lo: list
    pre_hi: list
    lo: list
    hi: list
    net: object = None
    relax: dict = None

    def of(self, name):
        i, j = self.net.index[name]
        return float(self.lo[i][j]), float(self.hi[i][j])

    def pre_of(self, name):
        i, j = self.net.index[name]
        return float(self.pre_lo[i][j]), float(self.pre_hi[i][j])


@dataclass
class FfnnResult:
    sat: bool
    assignment: dict = None
    method: str = ""
    stats: dict = field(default_factory=dict)


def _input_arrays(net, box):
    if isinstance(box, dict):
        lo = np.array([box.get(n, (-math.inf, math.inf))[0] for n in net.input_names])
        hi = np.array([box.get(n, (-math.inf, math.inf))[1] for n in net.input_names])
        return lo, hi
    lo, hi = box
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def propagate_bounds(net, box):
    """Interval bounds of every neuron for inputs in ``box``.

    ``box`` is ``{input name: (lo, hi)}`` or a pair of arrays. Inputs left
    unbounded yield infinite intervals downstream.
    """
    lo, hi = _input_arrays(net, box)
    pre_lo, pre_hi, post_lo, post_hi = [lo], [hi], [lo], [hi]
    with np.errstate(invalid="ignore"):
        for layer in net.layers:
            zl = layer.b.copy()
            zh = layer.b.copy()
            for s, W, cols in layer.sources:
                sl = post_lo[s] if cols is None else post_lo[s][list(cols)]
                sh = post_hi[s] if cols is None else post_hi[s][list(cols)]
                Wp = np.maximum(W, 0.0)
                Wn = np.minimum(W, 0.0)
                zl = zl + _safe_dot(Wp, sl) + _safe_dot(Wn, sh)
                zh = zh + _safe_dot(Wp, sh) + _safe_dot(Wn, sl)
            pre_lo.append(zl)
            pre_hi.append(zh)
            if layer.activation == RELU:
                post_lo.append(np.maximum(zl, 0.0))
                post_hi.append(np.maximum(zh, 0.0))
            else:
                post_lo.append(zl)
                post_hi.append(zh)
    return NeuronBounds(pre_lo, pre_hi, post_lo, post_hi, net)


def _safe_dot(W, v):
    # 0 * inf contributes nothing
    prod = W * v[None, :]
    prod[W == 0.0] = 0.0
    return prod.sum(axis=1)


def _relaxation(l, u):
    """Slopes and intercept with ``a_lo z <= ReLU(z) <= a_up z + c_up`` on ``[l, u]``."""
    a_lo = np.zeros_like(l)
    a_up = np.zeros_like(l)
    c_up = np.zeros_like(l)
    active = l >= 0.0
    a_lo[active] = a_up[active] = 1.0
    unstable = (l < 0.0) & (u > 0.0)
    fl, fu = np.isfinite(l), np.isfinite(u)
    chord = unstable & fl & fu
    with np.errstate(invalid="ignore", divide="ignore"):
        a_up[chord] = u[chord] / (u[chord] - l[chord])
        c_up[chord] = -l[chord] * a_up[chord]
    # the lower slope with the smaller relaxation area
    a_lo[unstable] = (u[unstable] > -l[unstable]).astype(float)
    only_lo = unstable & fl & ~fu
    a_up[only_lo] = 1.0
    c_up[only_lo] = -l[only_lo]
    only_hi = unstable & ~fl & fu
    c_up[only_hi] = u[only_hi]
    c_up[unstable & ~fl & ~fu] = math.inf
    return a_lo, a_up, c_up


def _backsub(net, coeffs, const, relax, upper, lo0, hi0):
    """Bound ``sum_i coeffs[i] . v_i + const`` by substituting relaxations down to inputs.

    ``coeffs`` maps layer index to an ``(m, size)`` matrix over post-activation
    values and is consumed. Returns the ``(m,)`` bound and the input-layer
    coefficients it was reduced to.
    """
    sizes = net.layer_sizes()
    m = const.size
    const = const.astype(float).copy()
    for i in range(max(coeffs, default=0), 0, -1):
        A = coeffs.pop(i, None)
        if A is None or not A.any():
            continue
        layer = net.layers[i - 1]
        if layer.activation == RELU:
            a_lo, a_up, c_up = relax[i]
            pos, neg = np.maximum(A, 0.0), np.minimum(A, 0.0)
            if upper:
                Az = pos * a_up + neg * a_lo
                const += _safe_dot(pos, c_up)
            else:
                Az = pos * a_lo + neg * a_up
                const += _safe_dot(neg, c_up)
        else:
            Az = A
        const += Az @ layer.b
        for s, W, cols in layer.sources:
            tgt = coeffs.setdefault(s, np.zeros((m, sizes[s])))
            if cols is None:
                tgt += Az @ W
            else:
                tgt[:, list(cols)] += Az @ W
    A0 = coeffs.get(0, np.zeros((m, sizes[0])))
    pos, neg = np.maximum(A0, 0.0), np.minimum(A0, 0.0)
    if upper:
        const += _safe_dot(pos, hi0) + _safe_dot(neg, lo0)
    else:
        const += _safe_dot(pos, lo0) + _safe_dot(neg, hi0)
    return const, A0


def symbolic_bounds(net, box, need=None):
    """Interval bounds tightened by linear relaxation of every ReLU.

    Each layer's pre-activation is bounded by back-substitution through the
    relaxations of all earlier layers and intersected with the interval
    step. Layers outside ``need`` get interval bounds only.
    """
    lo0, hi0 = _input_arrays(net, box)
    pre_lo, pre_hi, post_lo, post_hi = [lo0], [hi0], [lo0], [hi0]
    relax = {}
    sizes = net.layer_sizes()
    with np.errstate(invalid="ignore"):
        for i, layer in enumerate(net.layers, start=1):
            zl = layer.b.copy()
            zh = layer.b.copy()
            for s, W, cols in layer.sources:
                sl = post_lo[s] if cols is None else post_lo[s][list(cols)]
                sh = post_hi[s] if cols is None else post_hi[s][list(cols)]
                Wp, Wn = np.maximum(W, 0.0), np.minimum(W, 0.0)
                zl = zl + _safe_dot(Wp, sl) + _safe_dot(Wn, sh)
                zh = zh + _safe_dot(Wp, sh) + _safe_dot(Wn, sl)
            if (need is None or need[i].any()) and i > 1:
                rows = np.arange(layer.size) if need is None else np.flatnonzero(need[i])
                coeffs = {}
                for s, W, cols in layer.sources:
                    tgt = coeffs.setdefault(s, np.zeros((rows.size, sizes[s])))
                    if cols is None:
                        tgt += W[rows]
                    else:
                        tgt[:, list(cols)] += W[rows]
                const = layer.b[rows]
                up, _ = _backsub(net, {k: v.copy() for k, v in coeffs.items()}, const, relax,
                                 True, lo0, hi0)
                low, _ = _backsub(net, coeffs, const, relax, False, lo0, hi0)
                zl[rows] = np.maximum(zl[rows], low)
                zh[rows] = np.minimum(zh[rows], up)
            pre_lo.append(zl)
            pre_hi.append(zh)
            if layer.activation == RELU:
                relax[i] = _relaxation(zl, zh)
                post_lo.append(np.maximum(zl, 0.0))
                post_hi.append(np.maximum(zh, 0.0))
            else:
                post_lo.append(zl)
                post_hi.append(zh)
    return NeuronBounds(pre_lo, pre_hi, post_lo, post_hi, net, relax)


def expr_bounds(bounds, expr, box):
    """``(lo, hi, lo_inputs)`` for a linear expression over neurons.

    ``lo_inputs`` are the input-layer coefficients of the lower bound, whose
    signs point at the input corner that makes the expression large.
    """
    net = bounds.net
    sizes = net.layer_sizes()
    coeffs = {}
    for v, k in expr.terms:
        i, j = net.index[v]
        coeffs.setdefault(i, np.zeros((1, sizes[i])))[0, j] += k
    const = np.array([expr.constant])
    lo0, hi0 = _input_arrays(net, box)
    relax = bounds.relax if bounds.relax is not None else {
        i: _relaxation(bounds.pre_lo[i], bounds.pre_hi[i]) for i in range(1, len(sizes))
        if net.layers[i - 1].activation == RELU}
    with np.errstate(invalid="ignore"):
        hi, _ = _backsub(net, {k: v.copy() for k, v in coeffs.items()}, const, relax, True,
                         lo0, hi0)
        lo, A0 = _backsub(net, coeffs, const, relax, False, lo0, hi0)
    return float(lo[0]), float(hi[0]), A0[0]


def cone_of_influence(net, names):
    """Boolean mask per layer marking neurons that ``names`` depend on."""
    sizes = net.layer_sizes()
    need = [np.zeros(s, dtype=bool) for s in sizes]
    for n in names:
        i, j = net.index[n]
        need[i][j] = True
    for i in range(len(net.layers), 0, -1):
        if not need[i].any():
            continue
        rows = need[i]
        for s, W, cols in net.layers[i - 1].sources:
            used = np.any(W[rows] != 0.0, axis=0)
            if cols is None:
                need[s] |= used
            else:
                need[s][np.asarray(cols)[used]] = True
    return need


def _query_box(q):
    """Bounds for every input the query touches; raises if one is unbounded."""
    needed_inputs = set()
    qnames = sorted({v for c in q.Q for v in c.variables})
    need = cone_of_influence(q.net, qnames)
    for j in np.flatnonzero(need[0]):
        needed_inputs.add(q.net.input_names[j])
    box = derive_box(q.P, variables=sorted(needed_inputs | set(q.integers)))
    for name in q.integers:
        lo, hi = box[name]
        lo, hi = math.ceil(lo - REPLAY_TOL), math.floor(hi + REPLAY_TOL)
        if lo > hi:
            raise InfeasibleConstraints(f"no whole value of {name} satisfies the constraints")
        box[name] = (float(lo), float(hi))
    return box, need


def _q_interval_unsat(q, bounds):
    for c in q.Q:
        lo = hi = c.expr.constant
        for v, k in c.expr.terms:
            a, b = bounds.of(v)
            lo += k * a if k > 0 else k * b
            hi += k * b if k > 0 else k * a
        if c.relation == LE and lo > 0.0:
            return True
        if c.relation == GE and hi < 0.0:
            return True
        if c.relation == EQ and (lo > 0.0 or hi < 0.0):
            return True
    return False


def _q_symbolic(q, bounds, box):
    """``(unsat, attack points)`` from relaxation bounds on each Q expression.

    An attack point sets each input to the end of its range that pushes
    the relaxed lower (or upper) bound of the expression towards satisfying
    the constraint.
    """
    lo0, hi0 = _input_arrays(q.net, box)
    lo0 = np.where(np.isfinite(lo0), lo0, 0.0)
    hi0 = np.where(np.isfinite(hi0), hi0, 0.0)
    attacks = []
    for c in q.Q:
        if not c.expr.terms:
            continue
        lo, hi, A0 = expr_bounds(bounds, c.expr, box)
        if c.relation == LE and lo > 0.0 or c.relation == GE and hi < 0.0:
            return True, []
        if c.relation == EQ and (lo > 0.0 or hi < 0.0):
            return True, []
        if c.relation in (GE, EQ):
            attacks.append(np.where(A0 > 0.0, hi0, lo0))
        if c.relation in (LE, EQ):
            attacks.append(np.where(A0 > 0.0, lo0, hi0))
    return False, attacks


def _satisfies(constraints, assignment, tol):
    return all(c.holds(assignment, tol) for c in constraints)


def _sample_inputs(net, box, rng, n_random):
    lo, hi = _input_arrays(net, box)
    # inputs outside the query's constraints and cone are irrelevant; pin them
    lo = np.where(np.isfinite(lo), lo, 0.0)
    hi = np.where(np.isfinite(hi), hi, 0.0)
    d = lo.size
    pts = [0.5 * (lo + hi)]
    free = np.flatnonzero(hi > lo)
    if free.size <= 10:
        for bits in itertools.product((0, 1), repeat=free.size):
            p = lo.copy()
            p[free] = np.where(np.array(bits, dtype=bool), hi[free], lo[free])
            pts.append(p)
    else:
        for _ in range(256):
            pick = rng.integers(0, 2, size=d).astype(bool)
            pts.append(np.where(pick, hi, lo))
    pts.extend(rng.uniform(lo, hi, size=(n_random, d)))
    return np.array(pts)


def falsify_by_sampling(q, box, n_random=256, seed=0, extra=()):
    """A satisfying full assignment found by concrete sampling, or None.

    ``extra`` points are tried alongside the generated ones.
    """
    rng = np.random.default_rng(seed)
    X = _sample_inputs(q.net, box, rng, n_random)
    if len(extra):
        X = np.vstack([np.asarray(extra, dtype=float).reshape(-1, X.shape[1]), X])
    for name in q.integers:
        j = q.net.input_names.index(name)
        X[:, j] = np.clip(np.round(X[:, j]), *box[name])
    _, values = evaluate_ffnn_batch(q.net, X)
    names = q.net.names()
    flat = np.concatenate(values, axis=1)
    col = {n: i for i, n in enumerate(names)}
    ok = np.ones(X.shape[0], dtype=bool)
    for c in tuple(q.P) + tuple(q.Q):
        val = np.full(X.shape[0], c.expr.constant)
        for v, k in c.expr.terms:
            val = val + k * flat[:, col[v]]
        if c.relation == LE:
            ok &= val <= 0.0
        elif c.relation == GE:
            ok &= val >= 0.0
        else:
            ok &= val == 0.0
        if not ok.any():
            return None
    i = int(np.flatnonzero(ok)[0])
    return dict(zip(names, flat[i].tolist()))


class Encoding:
    """MILP model of the cone of a network.

    Each neuron's value is an affine form over model variables: inputs,
    plus one variable per ReLU whose interval straddles zero. Stable neurons
    are substituted and cost nothing.
    """

    def __init__(self, net, box, bounds, need, integers=()):
        self.net = net
        self.model = LinearModel()
        self.expr = {}
        self.input_vars = {}
        self.binaries = 0
        self.contradiction = False
        lo, hi = _input_arrays(net, box)
        for j, name in enumerate(net.input_names):
            if not need[0][j] and name not in box:
                continue
            v = self.model.add_var(lo[j], hi[j], name=name)
            self.input_vars[name] = v
            self.expr[(0, j)] = ({v: 1.0}, 0.0)
        for name in integers:
            if name in self.input_vars:
                self._make_integer(self.input_vars[name], *box[name])
        for i, layer in enumerate(net.layers, start=1):
            for j in np.flatnonzero(need[i]):
                self._encode_neuron(i, int(j), layer, bounds)

    def _make_integer(self, v, lo, hi):
        """Restrict ``v`` to whole values in ``[lo, hi]`` by a binary expansion."""
        span = int(hi - lo)
        if span <= 0:
            return
        coeffs = {v: 1.0}
        for k in range(span.bit_length()):
            coeffs[self.model.add_var(0.0, 1.0, binary=True)] = -float(2 ** k)
            self.binaries += 1
        self.model.add_constr(coeffs, EQ, float(lo))

    def _encode_neuron(self, i, j, layer, bounds):
        coeffs, const = {}, float(layer.b[j])
        for s, W, cols in layer.sources:
            row = W[j]
            for k in np.flatnonzero(row):
                src = (s, int(k) if cols is None else cols[k])
                sc, s0 = self.expr[src]
                w = float(row[k])
                const += w * s0
                for v, a in sc.items():
                    coeffs[v] = coeffs.get(v, 0.0) + w * a
        name = layer.names[j]
        if layer.activation != RELU:
            self.expr[(i, j)] = (coeffs, const)
            return
        zl, zh = float(bounds.pre_lo[i][j]), float(bounds.pre_hi[i][j])
        if zl >= 0.0:
            self.expr[(i, j)] = (coeffs, const)
        elif zh <= 0.0:
            self.expr[(i, j)] = ({}, 0.0)
        else:
            y = self.model.add_var(0.0, zh, name=name)
            encode_relu(self.model, (coeffs, const), y, zl, zh)
            self.binaries += 1
            self.expr[(i, j)] = ({y: 1.0}, 0.0)

    def affine(self, expr):
        """Model-level ``(coeffs, constant)`` of a property expression."""
        coeffs, const = {}, expr.constant
        for v, k in expr.terms:
            sc, s0 = self.expr[self.net.index[v]]
            const += k * s0
            for idx, a in sc.items():
                coeffs[idx] = coeffs.get(idx, 0.0) + k * a
        return coeffs, const

    def add(self, constraint):
        coeffs, const = self.affine(constraint.expr)
        if not coeffs:
            ok = {LE: const <= 0.0, GE: const >= 0.0, EQ: const == 0.0}[constraint.relation]
            self.contradiction |= not ok
            return
        self.model.add_constr(coeffs, constraint.relation, -const)


def _replay(q, x_inputs):
    """Full assignment from concrete inputs, or None when it misses P or Q."""
    x = np.array([x_inputs.get(n, 0.0) for n in q.net.input_names])
    _, assignment = evaluate_ffnn(q.net, x, full=True)
    if _satisfies(q.P, assignment, REPLAY_TOL) and _satisfies(q.Q, assignment, REPLAY_TOL):
        return assignment
    return None


def verify(q, time_budget=None, sample=True, seed=0, dump=None, backend=None, symbolic=True):
    """Decide ``q``; SAT results carry a full assignment that replays.

    With ``symbolic`` the ReLU bounds are tightened by linear relaxation,
    which shrinks the MILP's big-M constants and often decides ``q`` outright.

    Raises :class:`~snapverify.solver.TimeBudgetExceeded` when the MILP
    runs out of time and :class:`NumericalFailure` if a MILP witness does
    not replay.
    """
    try:
        box, need = _query_box(q)
    except InfeasibleConstraints:
        return FfnnResult(False, method="infeasible-P")
    bounds = propagate_bounds(q.net, box)
    if _q_interval_unsat(q, bounds):
        return FfnnResult(False, method="intervals")
    attacks = []
    if symbolic:
        bounds = symbolic_bounds(q.net, box, need)
        unsat, attacks = _q_symbolic(q, bounds, box)
        if unsat:
            return FfnnResult(False, method="relaxation")
    if sample:
        found = falsify_by_sampling(q, box, seed=seed, extra=attacks)
        if found is not None:
            return FfnnResult(True, found, method="sampling")
    enc = Encoding(q.net, box, bounds, need, q.integers)
    for c in q.P:
        enc.add(c)
    for c in q.Q:
        enc.add(c)
    if enc.contradiction:
        return FfnnResult(False, method="constant")
    if not enc.model.n_vars:
        enc.model.add_var(0.0, 0.0)
    enc.model.set_objective({})
    milp = enc.model.to_milp()
    if dump is not None:
        write_lp(milp, dump)
    res = solve_milp(milp, time_budget=time_budget, backend=backend)
    stats = {"binaries": enc.binaries, "nodes": res.nodes, "iterations": res.iterations}
    if res.status is not Status.OPTIMAL:
        return FfnnResult(False, method="milp", stats=stats)
    x_inputs = {n: float(res.x[v]) for n, v in enc.input_vars.items()}
    for name in q.integers:
        if name in x_inputs:
            x_inputs[name] = float(round(x_inputs[name]))
    assignment = _replay(q, x_inputs)
    if assignment is None:
        raise NumericalFailure("MILP witness does not replay through the network")
    return FfnnResult(True, assignment, method="milp", stats=stats)


def verify_exhaustive(q, limit=MAX_EXHAUSTIVE_RELUS):
    """Decide ``q`` by enumerating phases of every undecided ReLU.

    Phases are fixed depth-first in network order; each partial pattern is
    an LP over the inputs, and infeasible prefixes are pruned.
    """
    try:
        box, need = _query_box(q)
    except InfeasibleConstraints:
        return FfnnResult(False, method="infeasible-P")
    if q.integers:
        # one query per combination of whole values
        names = list(q.integers)
        ranges = [range(int(box[n][0]), int(box[n][1]) + 1) for n in names]
        for values in itertools.product(*ranges):
            fixed = tuple(eq(n, float(k)) for n, k in zip(names, values))
            res = verify_exhaustive(FfnnQuery(q.P + fixed, q.net, q.Q), limit)
            if res.sat:
                return res
        return FfnnResult(False, method="exhaustive")
    net = q.net
    bounds = propagate_bounds(net, box)
    inputs = [n for j, n in enumerate(net.input_names) if need[0][j] or n in box]
    col = {n: k for k, n in enumerate(inputs)}
    n_in = len(inputs)
    lo = np.array([box[n][0] for n in inputs])
    hi = np.array([box[n][1] for n in inputs])

    # affine form of every needed neuron under a phase pattern, built lazily
    order = [(i, int(j)) for i in range(1, len(net.layers) + 1)
             for j in np.flatnonzero(need[i])]
    unstable = [(i, j) for i, j in order
                if net.layers[i - 1].activation == RELU
                and bounds.pre_lo[i][j] < 0.0 < bounds.pre_hi[i][j]]
    if len(unstable) > limit:
        raise ValueError(f"{len(unstable)} undecided ReLUs exceed the limit of {limit}")

    def linear_rows(constraints, forms):
        rows, senses, rhs = [], [], []
        for c in constraints:
            a = np.zeros(n_in)
            k0 = c.expr.constant
            for v, k in c.expr.terms:
                w, w0 = forms[net.index[v]]
                a += k * w
                k0 += k * w0
            rows.append(a)
            senses.append(c.relation)
            rhs.append(-k0)
        return rows, senses, rhs

    def forms_for(phases):
        """Affine forms (coeffs over inputs, const) and phase constraints."""
        forms = {}
        for j, n in enumerate(net.input_names):
            if n in col:
                e = np.zeros(n_in)
                e[col[n]] = 1.0
                forms[(0, j)] = (e, 0.0)
        rows, senses, rhs = [], [], []
        for i, j in order:
            layer = net.layers[i - 1]
            w = np.zeros(n_in)
            w0 = float(layer.b[j])
            complete = True
            for s, W, cols in layer.sources:
                for k in np.flatnonzero(W[j]):
                    src = (s, int(k) if cols is None else cols[k])
                    if src not in forms:
                        complete = False
                        break
                    a, a0 = forms[src]
                    w = w + W[j, k] * a
                    w0 += W[j, k] * a0
                if not complete:
                    break
            if not complete:
                continue
            if layer.activation != RELU or bounds.pre_lo[i][j] >= 0.0:
                forms[(i, j)] = (w, w0)
            elif bounds.pre_hi[i][j] <= 0.0:
                forms[(i, j)] = (np.zeros(n_in), 0.0)
            elif (i, j) in phases:
                if phases[(i, j)]:
                    forms[(i, j)] = (w, w0)
                    rows.append(w); senses.append(GE); rhs.append(-w0)
                else:
                    forms[(i, j)] = (np.zeros(n_in), 0.0)
                    rows.append(w); senses.append(LE); rhs.append(-w0)
        return forms, rows, senses, rhs

    p_rows, p_senses, p_rhs = linear_rows(q.P, forms_for({})[0]) if n_in else ([], [], [])
    lps = 0

    def feasible(phases, final):
        nonlocal lps
        forms, rows, senses, rhs = forms_for(phases)
        rows, senses, rhs = list(p_rows) + rows, list(p_senses) + senses, list(p_rhs) + rhs
        if final:
            r2, s2, h2 = linear_rows(q.Q, forms)
            rows += r2; senses += s2; rhs += h2
        if not n_in:
            ok = all((s == LE and 0 <= r) or (s == GE and 0 >= r) or (s == EQ and r == 0)
                     for s, r in zip(senses, rhs))
            return ok, {}
        A = np.array(rows).reshape(-1, n_in)
        lps += 1
        res = solve_lp(LpProblem(np.zeros(n_in), A, senses, rhs, lo, hi))
        if not res.optimal:
            return False, None
        return True, dict(zip(inputs, res.x.tolist()))

    def dfs(k, phases):
        ok, x = feasible(phases, k == len(unstable))
        if not ok:
            return None
        if k == len(unstable):
            return x
        for phase in (True, False):
            phases[unstable[k]] = phase
            found = dfs(k + 1, phases)
            del phases[unstable[k]]
            if found is not None:
                return found
        return None

    x = dfs(0, {})
    stats = {"relus": len(unstable), "lps": lps}
    if x is None:
        return FfnnResult(False, method="exhaustive", stats=stats)
    vec = np.array([x.get(n, 0.0) for n in net.input_names])
    _, assignment = evaluate_ffnn(net, vec, full=True)
    return FfnnResult(True, assignment, method="exhaustive", stats=stats)
