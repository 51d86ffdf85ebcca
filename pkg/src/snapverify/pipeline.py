"""End-to-end RNN verification: snapshot, infer, certify, decide.

``verify_rnn`` proves a query by finding inductive invariants that make the
snapshot query UNSAT. When the snapshot query is SAT, its witness seeds a
search for a concrete counterexample before the invariants are refined.
``verify_rnn_unrolled`` is the exact (and slow) baseline.
"""
from dataclasses import dataclass, field
import time

import numpy as np

from .ffnn_verifier import propagate_bounds, verify
from .invariants import (DEFAULT_EPSILON, DEFAULT_EPSILON_TIGHTEN, UPPER, Failure,
                         InferenceContext, InferenceInfeasible, InvariantSet, LinearInvariant,
                         _is_relu, adjustable_bounds, alg1, alg2, incremental_adjust,
                         infer_milp, strengthen_milp)
from .network import TIME, at_step, evaluate_rnn, evaluate_rnn_batch, memory_name, unroll
from .props import (GE, LE, FfnnQuery, PropertyError, Verdict, VerdictKind, derive_box,
                    instantiate_at)
from .solver import NumericalFailure, TimeBudgetExceeded
from .timing import PhaseTimer

MODES = ("auto", "binary-search", "single-unit", "layered", "milp", "incremental")
BISECTION_MODES = ("binary-search", "single-unit", "layered")
PHASES = ("inference", "phi_checks", "snapshot", "falsify")


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of :func:`verify_rnn`.

    ``M`` overrides the computed binary-search range; ``time_budget`` caps
    each engine call in seconds. ``mode`` picks the inference procedure:
    ``"single-unit"`` bisects the bound of a lone memory unit,
    ``"layered"`` bisects one unit per layer in layer order,
    ``"binary-search"`` picks between those two, ``"milp"`` solves for all
    slopes of a layer at once and ``"incremental"`` nudges slopes by fixed
    steps. ``"auto"`` chooses by the layout of memory units.
    """

    epsilon: float = DEFAULT_EPSILON
    epsilon_tighten: float = DEFAULT_EPSILON_TIGHTEN
    M: float = None
    max_refinements: int = 10
    time_budget: float = None
    mode: str = "auto"
    incremental_step: float = None
    max_incremental: int = 200
    falsify_samples: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown inference mode {self.mode!r}")
        if self.epsilon <= 0 or self.epsilon_tighten < 0:
            raise ValueError("epsilon must be positive and epsilon_tighten non-negative")
        if self.M is not None and self.M <= 0:
            raise ValueError("M must be positive")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ValueError("time_budget must be positive")
        if self.max_refinements < 0 or self.max_incremental < 1:
            raise ValueError("refinement caps must be non-negative")
        if self.incremental_step is not None and self.incremental_step <= 0:
            raise ValueError("incremental_step must be positive")


@dataclass
class RunReport:
    verdict: Verdict
    invariants: InvariantSet
    timings: dict
    refinements: int = 0
    mode: str = ""
    history: list = field(default_factory=list)

    def to_dict(self):
        v = self.verdict
        out = {
            "verdict": v.kind.value,
            "reason": v.reason,
            "mode": self.mode,
            "refinements": self.refinements,
            "invariants": self.invariants.to_dict() if self.invariants is not None else [],
            "timings": self.timings,
        }
        if v.violated:
            out["step"] = v.step
            out["counterexample"] = v.witness.inputs.tolist()
        return out


def _step_boxes(q):
    """Per-step input boxes implied by P (one shared box if P ignores t)."""
    names = q.net.input_names()
    if TIME not in q.P.variables:
        b = derive_box(q.P, variables=names)
        box = (np.array([b[n][0] for n in names]), np.array([b[n][1] for n in names]))
        return [box] * q.t_max
    out = []
    for t in range(1, q.t_max + 1):
        b = derive_box(instantiate_at(q.P, t), variables=names)
        out.append((np.array([b[n][0] for n in names]), np.array([b[n][1] for n in names])))
    return out


def _screen(q, X):
    """Index of the first sequence in ``X`` that violates ``q``, or None."""
    vals = evaluate_rnn_batch(q.net, X)
    n, T = X.shape[0], X.shape[1]
    p_ok = np.ones((n, T), dtype=bool)
    for c in q.P.constraints:
        v = c.expr.evaluate(vals)
        p_ok &= v <= 0 if c.relation == LE else v >= 0 if c.relation == GE else v == 0
    prefix_ok = np.cumprod(p_ok, axis=1).astype(bool)
    q_ok = np.zeros((n, T), dtype=bool)
    for d in q.Q.disjuncts:
        ok = np.ones((n, T), dtype=bool)
        for c in d:
            v = c.expr.evaluate(vals)
            ok &= v <= 0 if c.relation == LE else v >= 0 if c.relation == GE else v == 0
        q_ok |= ok
    in_scope = np.zeros(T, dtype=bool)
    in_scope[[s - 1 for s in q.Q.steps(q.t_max) if s <= T]] = True
    hit = np.flatnonzero(np.any(prefix_ok & q_ok & in_scope, axis=1))
    return int(hit[0]) if hit.size else None


def falsify_concrete(q, witness, n_random=64, seed=0):
    """A concrete counterexample trace suggested by a snapshot witness, or None.

    Tries the witness inputs held constant (raw and clipped into P's box),
    constant box corners and random sequences within P. The returned trace
    ends at its first violating step and satisfies P throughout.
    """
    names = q.net.input_names()
    try:
        boxes = _step_boxes(q)
    except PropertyError:
        return None
    lo = np.stack([b[0] for b in boxes])
    hi = np.stack([b[1] for b in boxes])
    T, d = lo.shape
    x = np.array([float(witness.get(n, 0.0)) for n in names])
    candidates = [np.tile(x, (T, 1)), np.clip(np.tile(x, (T, 1)), lo, hi)]
    rng = np.random.default_rng(seed)
    if d <= 6:
        for bits in range(2 ** d):
            pick = np.array([(bits >> k) & 1 for k in range(d)], dtype=bool)
            candidates.append(np.where(pick, hi, lo))
    else:
        for _ in range(64):
            candidates.append(np.where(rng.integers(0, 2, size=d).astype(bool), hi, lo))
    for _ in range(n_random):
        X = rng.uniform(lo, hi)
        candidates.append(X)
        # random prefix, then the witness inputs
        Y = X.copy()
        Y[-1] = np.clip(x, lo[-1], hi[-1])
        candidates.append(Y)
    X = np.stack(candidates)
    while True:
        i = _screen(q, X)
        if i is None:
            return None
        # confirm exactly with a single replay
        trace = evaluate_rnn(q.net, X[i])
        step = q.violation_step(trace)
        if step is not None:
            return evaluate_rnn(q.net, X[i][:step])
        X = X[i + 1:]


class _Run:
    def __init__(self, q, cfg):
        self.q = q
        self.cfg = cfg
        self.timer = PhaseTimer()
        self.ctx = InferenceContext(q, cfg.time_budget, self.timer, self._falsify)
        self.history = []
        self.refinements = 0

    def _falsify(self, q, witness):
        trace = falsify_concrete(q, witness, self.cfg.falsify_samples, self.cfg.seed)
        if trace is None:
            return None
        return trace, trace.length

    def report(self, kind, invariants=None, trace=None, step=None, reason="", mode=""):
        self.timer.finish()
        timings = self.timer.report(PHASES)
        verdict = Verdict(kind, trace, step, reason, timings, invariants)
        return RunReport(verdict, invariants, timings, self.refinements, mode, self.history)

    def from_outcome(self, out, mode):
        self.refinements = out.refinements
        self.history = list(out.history)
        if out.status == "holds":
            return self.report(VerdictKind.HOLDS, out.invariants, mode=mode)
        if out.status == "violated":
            return self.report(VerdictKind.VIOLATED, out.invariants, out.trace, out.step,
                               mode=mode)
        return self.report(VerdictKind.UNKNOWN, out.invariants, reason=out.reason, mode=mode)

    def decide(self, invariants, mode):
        """Snapshot query under ``invariants``: a report, or the SAT witness."""
        sat, witness = self.ctx.snapshot_query(invariants)
        if not sat:
            return self.report(VerdictKind.HOLDS, invariants, mode=mode), None
        found = self.ctx.falsify(witness)
        if found is not None:
            return self.report(VerdictKind.VIOLATED, invariants, found[0], found[1],
                               mode=mode), None
        return None, witness


def choose_mode(net, requested="auto"):
    if requested != "auto":
        return requested
    units = net.memory_units()
    if not units:
        return "none"
    layers = [u[0] for u in units]
    if len(set(layers)) == len(layers) and all(_is_relu(net, u) for u in units):
        return "binary-search"
    return "milp"


def _milp(run):
    q, cfg, ctx = run.q, run.cfg, run.ctx
    layers = q.net.memory_layers()
    proven = InvariantSet()
    cands = {}
    with run.timer.phase("inference"):
        for L in layers:
            cand = infer_milp(q.net, q.P, proven, L, q.t_max, epsilon=cfg.epsilon,
                              snap=ctx.snap, time_budget=cfg.time_budget)
            if not ctx.certify(proven, cand.invariants).certified:
                return run.report(VerdictKind.UNKNOWN, proven,
                                  reason=f"inferred invariant for layer {L} was refuted",
                                  mode="milp")
            proven = proven.merge(cand.invariants)
            cands[L] = cand
    run.history.append(proven)
    while True:
        done, _ = run.decide(proven, "milp")
        if done is not None:
            return done
        if run.refinements >= cfg.max_refinements:
            return run.report(VerdictKind.UNKNOWN, proven, reason="refinement limit reached",
                              mode="milp")
        progress = False
        with run.timer.phase("inference"):
            for L in layers:
                earlier = proven.before(L)
                try:
                    new = strengthen_milp(q.net, q.P, q.t_max, cands[L], cfg.epsilon_tighten,
                                          snap=ctx.snap, time_budget=cfg.time_budget,
                                          proven=earlier)
                except InferenceInfeasible:
                    continue
                if new.no_progress or not ctx.certify(earlier, new.invariants).certified:
                    continue
                cands[L] = new
                proven = proven.merge(new.invariants)
                progress = True
        if not progress:
            return run.report(VerdictKind.UNKNOWN, proven,
                              reason="no tighter invariant exists", mode="milp")
        run.refinements += 1
        run.history.append(proven)


def _initial_slopes(q, snap):
    """Memory-free interval bound of each unit's neuron at a single step."""
    box = derive_box(q.P, t_range=(1, q.t_max), variables=q.net.input_names())
    for u in q.net.memory_units():
        box[memory_name(*u)] = (0.0, 0.0)
    b = propagate_bounds(snap.ffnn, box)
    out = []
    for u in q.net.memory_units():
        L, j = u
        lo, hi = b.of(q.net.neuron_names(L)[j])
        if _is_relu(q.net, u):
            lo = 0.0
        out.append(LinearInvariant(u, float(lo), float(max(hi, lo))))
    return InvariantSet.of(out)


def _tightest(inv, witness, cursor):
    """Index into :func:`adjustable_bounds` of the bound with the least slack
    at the snapshot witness; round robin when there is no witness."""
    bounds = adjustable_bounds(None, inv)
    if not witness or TIME not in witness:
        return cursor % len(bounds)
    s = witness[TIME] - 1.0
    slack = []
    for k, (unit, direction) in enumerate(bounds):
        i, m = inv.get(unit), witness.get(memory_name(*unit), 0.0)
        gap = i.alpha_u * s - m if direction == UPPER else m - i.alpha_l * s
        # ties go round robin, starting after the last pick
        slack.append((gap, (k - cursor) % len(bounds), k))
    return min(slack)[2]


def _incremental(run):
    """Move one slope at a time: weaken refuted bounds, tighten the bound the
    snapshot counterexample leans on. Each bound halves its own step when
    its direction of travel reverses."""
    q, cfg, ctx = run.q, run.cfg, run.ctx
    layers = q.net.memory_layers()
    inv = _initial_slopes(q, ctx.snap)
    first = cfg.incremental_step
    if first is None:
        first = max([abs(i.alpha_u) for i in inv] + [1.0]) / 2.0
    steps = {}
    last = {}
    cursor = 0
    for _ in range(cfg.max_incremental):
        failure = None
        with run.timer.phase("inference"):
            for L in layers:
                res = ctx.certify(inv.before(L), inv.layer(L))
                if not res.certified:
                    failure = Failure("refuted", res.unit, res.direction)
                    break
        if failure is None:
            run.history.append(inv)
            done, witness = run.decide(inv, "incremental")
            if done is not None:
                return done
            pick = _tightest(inv, witness, cursor)
            cursor = pick + 1
            failure = Failure("snapshot", cursor=pick)
            key = adjustable_bounds(q.net, inv)[pick]
            sign = "tighten"
        else:
            key = (failure.unit, failure.direction)
            sign = "weaken"
        steps.setdefault(key, first)
        if last.get(key) not in (None, sign):
            steps[key] /= 2.0
        last[key] = sign
        run.refinements += 1
        inv = incremental_adjust(inv, failure, steps[key], q.net)
    return run.report(VerdictKind.UNKNOWN, None, reason="iteration limit reached",
                      mode="incremental")


def verify_rnn(q, cfg=None):
    """Decide ``q`` through the snapshot network; returns a :class:`RunReport`.

    HOLDS means every memory unit has a certified invariant under which the
    snapshot query is UNSAT. VIOLATED carries a concrete trace that replays
    exactly. Anything else is UNKNOWN with a reason.
    """
    cfg = cfg or PipelineConfig()
    run = _Run(q, cfg)
    mode = choose_mode(q.net, cfg.mode)
    try:
        if mode == "none":
            done, _ = run.decide(InvariantSet(), mode)
            return done or run.report(VerdictKind.UNKNOWN, InvariantSet(),
                                      reason="snapshot query is SAT", mode=mode)
        if mode in BISECTION_MODES:
            units = q.net.memory_units()
            with run.timer.phase("inference"):
                if mode == "single-unit" or mode == "binary-search" and len(units) == 1:
                    out = alg1(run.ctx, cfg.M, cfg.epsilon)
                else:
                    out = alg2(run.ctx, cfg.M, cfg.epsilon)
            return run.from_outcome(out, mode)
        if mode == "milp":
            return _milp(run)
        return _incremental(run)
    except InferenceInfeasible as exc:
        return run.report(VerdictKind.UNKNOWN, None, reason=str(exc), mode=mode)
    except (TimeBudgetExceeded, NumericalFailure) as exc:
        return run.report(VerdictKind.UNKNOWN, None, reason=f"engine: {exc}", mode=mode)


def unrolled_query(q, t, disjunct, net=None):
    """FFNN query over the unrolled network: P at steps ``1..t``, ``disjunct`` at ``t``."""
    net = net or unroll(q.net, q.t_max)
    P = []
    for s in range(1, t + 1):
        for c in instantiate_at(q.P, s):
            P.append(c.rename({v: at_step(v, s) for v in c.variables}))
    Q = []
    for c in disjunct:
        c = c.substitute(TIME, t)
        Q.append(c.rename({v: at_step(v, t) for v in c.variables}))
    return FfnnQuery(tuple(P), net, tuple(Q))


def verify_rnn_unrolled(q, time_budget=None):
    """Exact verdict by unrolling; one query per step and disjunct.

    Steps are tried in ascending order and the first SAT one yields the
    counterexample. Raises :class:`TimeBudgetExceeded` once ``time_budget``
    seconds have been spent.
    """
    start = time.perf_counter()
    net = unroll(q.net, q.t_max)
    names = q.net.input_names()
    for t in q.Q.steps(q.t_max):
        for disjunct in q.Q.disjuncts:
            remaining = None
            if time_budget is not None:
                remaining = time_budget - (time.perf_counter() - start)
                if remaining <= 0:
                    raise TimeBudgetExceeded("unrolled verification out of time")
            res = verify(unrolled_query(q, t, disjunct, net), time_budget=remaining)
            if res.sat:
                X = np.array([[res.assignment.get(at_step(n, s), 0.0) for n in names]
                              for s in range(1, t + 1)])
                trace = evaluate_rnn(q.net, X)
                if not q.holds_at(trace, t, tol=1e-6):
                    raise NumericalFailure("unrolled witness does not replay")
                return Verdict(VerdictKind.VIOLATED, trace, t,
                               timing={"total": time.perf_counter() - start})
    return Verdict(VerdictKind.HOLDS, timing={"total": time.perf_counter() - start})
