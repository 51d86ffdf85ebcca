"""Adversarial-robustness benchmarks on generated networks.

Networks are drawn with ``numpy.random.Generator(PCG64(seed))``: each
layer's ``W``, then ``H`` (recurrent layers only), then ``b`` are sampled
uniformly from ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` where ``fan_in`` is the
previous layer's width plus the layer's own width if it is recurrent.
"""
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import math
import statistics
import time

import numpy as np

from .network import IDENTITY, RELU, Layer, RnnNetwork, evaluate_rnn, input_name, output_name
from .pipeline import PipelineConfig, verify_rnn, verify_rnn_unrolled
from .props import InputProperty, OutputProperty, RnnQuery, box, ge, var
from .solver import TimeBudgetExceeded

CSV_FIELDS = ("network", "t_max", "delta", "queries", "certified", "violated", "unknown",
              "errors", "mean_runtime", "median_runtime", "unrolled_checked",
              "soundness_violations")
SERIES_FIELDS = ("t_max", "method", "mean_seconds", "certified", "total")


@dataclass(frozen=True)
class NetShape:
    input_dim: int = 40
    recurrent: tuple = (2,)
    dense: tuple = (32,) * 5
    output_dim: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "recurrent", tuple(self.recurrent))
        object.__setattr__(self, "dense", tuple(self.dense))
        sizes = (self.input_dim, self.output_dim) + self.recurrent + self.dense
        if any(s < 1 for s in sizes) or not self.recurrent:
            raise ValueError("dimensions must be positive and at least one layer recurrent")

    @property
    def label(self):
        mem = list(self.recurrent) + [0] * (2 - len(self.recurrent))
        return "N" + "_".join(str(m) for m in mem)


@dataclass(frozen=True)
class RobustnessSpec:
    point: np.ndarray
    delta: float
    t_max: int

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).reshape(-1))
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")


def generate_network(shape):
    rng = np.random.Generator(np.random.PCG64(shape.seed))
    layers, prev = [], shape.input_dim
    for size in shape.recurrent:
        bound = 1.0 / math.sqrt(prev + size)
        W = rng.uniform(-bound, bound, size=(size, prev))
        H = rng.uniform(-bound, bound, size=(size, size))
        b = rng.uniform(-bound, bound, size=size)
        layers.append(Layer(W, b, H))
        prev = size
    sizes = shape.dense + (shape.output_dim,)
    for i, size in enumerate(sizes):
        bound = 1.0 / math.sqrt(prev)
        W = rng.uniform(-bound, bound, size=(size, prev))
        b = rng.uniform(-bound, bound, size=size)
        act = IDENTITY if i == len(sizes) - 1 else RELU
        layers.append(Layer(W, b, activation=act))
        prev = size
    return RnnNetwork(shape.input_dim, tuple(layers))


def top_two(scores):
    """``(label, runner_up)``; ties go to the lower index."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    return int(order[0]), int(order[1])


def build_robustness_query(net, spec):
    """Query that is SAT iff a perturbation of radius ``delta`` around the
    constant sequence at ``point`` makes the runner-up label score at least
    as high as the top label at the last step."""
    if net.output_dim < 2:
        raise ValueError("robustness needs at least two output labels")
    if spec.point.size != net.input_dim:
        raise ValueError(f"point has {spec.point.size} coordinates, expected {net.input_dim}")
    trace = evaluate_rnn(net, np.tile(spec.point, (spec.t_max, 1)))
    label, runner_up = top_two(trace.outputs[-1])
    P = InputProperty(tuple(c for k, x in enumerate(spec.point)
                            for c in box(input_name(k), x - spec.delta, x + spec.delta)))
    Q = OutputProperty(((ge(var(output_name(runner_up)) - var(output_name(label)), 0.0),),),
                       fixed_step=spec.t_max)
    return RnnQuery(P, net, Q, spec.t_max)


def random_points(shape, n, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.uniform(-1.0, 1.0, size=(n, shape.input_dim))


def min_delta_search(net, point, t_max, delta_hi, tolerance=1e-3, cfg=None):
    """Largest radius in ``[0, delta_hi]`` certified robust, to ``tolerance``.

    Anything but HOLDS counts as not certified, so the answer is a sound
    lower bound on the true robustness radius.
    """
    def certified(delta):
        q = build_robustness_query(net, RobustnessSpec(point, delta, t_max))
        return verify_rnn(q, cfg).verdict.holds

    if certified(delta_hi):
        return float(delta_hi)
    lo, hi = 0.0, float(delta_hi)
    while hi - lo > tolerance:
        mid = (lo + hi) / 2.0
        if certified(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class CellResult:
    network: str
    t_max: int
    point: int
    verdict: str
    runtime: float
    reason: str = ""
    unrolled: str = None


@dataclass
class BenchResult:
    rows: list
    cells: list
    flips: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            for row in self.rows:
                w.writerow(row)


def _run_cell(args):
    net, label, k, point, t_max, delta, cfg, check_max, unroll_budget = args
    start = time.perf_counter()
    try:
        q = build_robustness_query(net, RobustnessSpec(point, delta, t_max))
        report = verify_rnn(q, cfg)
        verdict, reason = report.verdict.kind.value, report.verdict.reason
    except Exception as exc:  # recorded, the sweep continues
        return CellResult(label, t_max, k, "error", time.perf_counter() - start, repr(exc))
    runtime = time.perf_counter() - start
    unrolled = None
    if t_max <= check_max:
        try:
            unrolled = verify_rnn_unrolled(q, unroll_budget).kind.value
        except TimeBudgetExceeded:
            unrolled = "timeout"
    return CellResult(label, t_max, k, verdict, runtime, reason, unrolled)


def _summarise(label, t_max, delta, cells):
    runtimes = [c.runtime for c in cells]
    checked = [c for c in cells if c.unrolled in ("holds", "violated")]
    bad = [c for c in checked if c.verdict == "holds" and c.unrolled == "violated"]
    return {
        "network": label,
        "t_max": t_max,
        "delta": delta,
        "queries": len(cells),
        "certified": sum(c.verdict == "holds" for c in cells),
        "violated": sum(c.verdict == "violated" for c in cells),
        "unknown": sum(c.verdict == "unknown" for c in cells),
        "errors": sum(c.verdict == "error" for c in cells),
        "mean_runtime": statistics.fmean(runtimes) if runtimes else 0.0,
        "median_runtime": statistics.median(runtimes) if runtimes else 0.0,
        "unrolled_checked": len(checked),
        "soundness_violations": len(bad),
    }


def run_benchmark(shapes, n_points=25, t_values=range(2, 21), delta=0.01, cfg=None,
                  point_seed=0, check_max=6, unroll_budget=60.0, jobs=1, csv_path=None,
                  progress=None):
    """Verify ``n_points`` robustness queries per shape and ``t_max``.

    One CSV row per (shape, t_max). Cells with ``t_max <= check_max`` are
    cross-checked by unrolling. ``flips`` lists points certified at some
    ``t_max`` but not at a smaller one.
    """
    cfg = cfg or PipelineConfig()
    tasks = []
    for shape in shapes:
        net = generate_network(shape)
        for k, point in enumerate(random_points(shape, n_points, point_seed)):
            for t in t_values:
                tasks.append((net, shape.label, k, point, t, delta, cfg, check_max,
                              unroll_budget))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            cells = list(pool.map(_run_cell, tasks))
    else:
        cells = []
        for task in tasks:
            cells.append(_run_cell(task))
            if progress is not None:
                progress(cells[-1])
    rows = []
    for shape in shapes:
        for t in t_values:
            group = [c for c in cells if c.network == shape.label and c.t_max == t]
            rows.append(_summarise(shape.label, t, delta, group))
    flips = []
    for shape in shapes:
        for k in range(n_points):
            seen_fail = None
            for t in t_values:
                c = next(c for c in cells if c.network == shape.label and c.point == k
                         and c.t_max == t)
                if c.verdict != "holds" and seen_fail is None:
                    seen_fail = t
                elif c.verdict == "holds" and seen_fail is not None:
                    flips.append((shape.label, k, seen_fail, t))
    result = BenchResult(rows, cells, flips)
    if csv_path is not None:
        result.write_csv(csv_path)
    return result


def comparison_series(queries_at, t_values, cfg=None, unroll_budget=600.0, progress=None):
    """Invariant method against unrolling, one row per method and ``t_max``.

    ``queries_at(t)`` returns the queries to run at ``t_max = t``; the
    budget applies to each unrolled query. Once unrolling exhausts it, larger
    ``t_max`` values are not attempted and their unrolling rows carry
    ``mean_seconds = None``.
    """
    rows = []
    exhausted = False
    for t in t_values:
        qs = list(queries_at(t))
        times, certified = [], 0
        for q in qs:
            start = time.perf_counter()
            certified += verify_rnn(q, cfg).verdict.holds
            times.append(time.perf_counter() - start)
        rows.append({"t_max": t, "method": "invariant", "mean_seconds": statistics.fmean(times),
                     "certified": certified, "total": len(qs)})
        if progress is not None:
            progress(rows[-1])
        times, certified = [], 0
        for q in qs if not exhausted else ():
            start = time.perf_counter()
            try:
                certified += verify_rnn_unrolled(q, unroll_budget).holds
            except TimeBudgetExceeded:
                exhausted = True
                break
            times.append(time.perf_counter() - start)
        done = not exhausted
        rows.append({"t_max": t, "method": "unrolling",
                     "mean_seconds": statistics.fmean(times) if done else None,
                     "certified": certified if done else None, "total": len(qs)})
        if progress is not None:
            progress(rows[-1])
    return rows


def write_series_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SERIES_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow(row)
