"""Command-line entry point: ``snapverify verify | bench | unroll``.

Exit codes of ``verify``: 0 holds, 1 violated, 2 unknown, 3 error.
"""
import argparse
import json
import logging
import os
import sys

from .bench import (NetShape, RobustnessSpec, build_robustness_query, comparison_series,
                    generate_network, random_points, run_benchmark, write_series_csv)
from .fileformats import (ParseError, emit_network, read_network, read_property,
                          report_document)
from .network import FfnnNetwork, unroll
from .pipeline import MODES, PipelineConfig, verify_rnn, verify_rnn_unrolled
from .props import OutputProperty, PropertyError, RnnQuery, VerdictKind
from .solver import TimeBudgetExceeded

EXIT_HOLDS, EXIT_VIOLATED, EXIT_UNKNOWN, EXIT_ERROR = 0, 1, 2, 3
EXIT_CODES = {VerdictKind.HOLDS: EXIT_HOLDS, VerdictKind.VIOLATED: EXIT_VIOLATED,
              VerdictKind.UNKNOWN: EXIT_UNKNOWN, VerdictKind.ERROR: EXIT_ERROR}

log = logging.getLogger("snapverify")


class UsageError(Exception):
    """Invalid input that should end the command with the error exit code."""


def _load_rnn(path):
    net = read_network(path)
    if isinstance(net, FfnnNetwork):
        raise UsageError(f"{path}: expected a recurrent network, found a feed-forward one")
    return net


def _print_report(doc, trace=None, out=None):
    def p(*a):
        print(*a, file=out or sys.stdout)

    p(f"verdict: {doc['verdict']}")
    if doc["reason"]:
        p(f"reason: {doc['reason']}")
    p(f"mode: {doc['mode']}")
    p(f"refinements: {doc['refinements']}")
    if doc["invariants"]:
        p("invariants:")
        for inv in doc["invariants"]:
            p(f"  {inv['alpha_l']:.6g} * (t - 1) <= {inv['unit']} <= "
              f"{inv['alpha_u']:.6g} * (t - 1)")
    tm = doc["timings"]
    p("timings (s): " + ", ".join(f"{k} {tm[k]:.4f}" for k in
                                  ("inference", "phi_checks", "snapshot", "falsify", "other",
                                   "total")))
    p(f"engine time: {tm['engine']:.4f} s ({100.0 * tm['engine_fraction']:.1f}% of total)")
    if "unrolled" in doc:
        p(f"unrolled baseline: {doc['unrolled']}")
    if trace is not None:
        p(f"counterexample violates the property at step {doc['step']}:")
        for s in range(trace.length):
            ins = " ".join(f"{x:.6g}" for x in trace.inputs[s])
            outs = " ".join(f"{y:.6g}" for y in trace.outputs[s])
            p(f"  step {s + 1}: inputs [{ins}] outputs [{outs}]")


def cmd_verify(args):
    net = _load_rnn(args.network)
    q = read_property(args.property, net)
    cfg = PipelineConfig(epsilon=args.epsilon, max_refinements=args.max_refinements,
                         mode=args.mode, time_budget=args.time_budget, seed=args.seed)
    report = verify_rnn(q, cfg)
    doc = report_document(report, q)
    if args.baseline_unroll:
        try:
            doc["unrolled"] = verify_rnn_unrolled(q, args.time_budget).kind.value
        except TimeBudgetExceeded:
            doc["unrolled"] = "timeout"
    if args.json:
        json.dump(doc, sys.stdout, indent=2)
        print()
    else:
        _print_report(doc, report.verdict.witness if report.verdict.violated else None)
    return EXIT_CODES[report.verdict.kind]


def _t_values(spec, where):
    if not isinstance(spec, list) or not spec or not all(
            isinstance(t, int) and t >= 1 for t in spec):
        raise UsageError(f"{where}.t_values must be a non-empty list of positive integers")
    return spec


def _section(cfg, key, allowed):
    sec = cfg.get(key)
    if sec is None:
        return None
    if not isinstance(sec, dict):
        raise UsageError(f"{key} must be an object")
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise UsageError(f"unknown key {key}.{unknown[0]}")
    return sec


def _shape(spec, where):
    try:
        return NetShape(**spec)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{where}: {exc}") from None


def _series_queries(series, cfg_dir):
    """``t -> [queries]`` for the comparison series section."""
    if "network" in series:
        net = _load_rnn(os.path.join(cfg_dir, series["network"]))
        q = read_property(os.path.join(cfg_dir, series["property"]), net)

        def at(t):
            Q = q.Q if q.Q.fixed_step is None else OutputProperty(q.Q.disjuncts, fixed_step=t)
            return [RnnQuery(q.P, net, Q, t)]
        return at
    shape = _shape(series.get("shape", {}), "series.shape")
    net = generate_network(shape)
    pts = random_points(shape, series.get("points", 3), series.get("point_seed", 0))
    delta = series.get("delta", 0.01)
    return lambda t: [build_robustness_query(net, RobustnessSpec(p, delta, t)) for p in pts]


def cmd_bench(args):
    with open(args.config) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno, exc.colno, args.config) from None
    if not isinstance(cfg, dict):
        raise UsageError("the config must be a JSON object")
    unknown = sorted(set(cfg) - {"output_dir", "pipeline", "table", "series"})
    if unknown:
        raise UsageError(f"unknown key {unknown[0]}")
    cfg_dir = os.path.dirname(os.path.abspath(args.config))
    out_dir = args.out or os.path.join(cfg_dir, cfg.get("output_dir", "bench-out"))
    try:
        pipeline = PipelineConfig(**cfg.get("pipeline", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"pipeline: {exc}") from None
    table = _section(cfg, "table", ("shapes", "points", "point_seed", "t_values", "delta",
                                    "check_max", "unroll_budget", "jobs"))
    series = _section(cfg, "series", ("network", "property", "shape", "points", "point_seed",
                                      "delta", "t_values", "unroll_budget"))
    if table is None and series is None:
        raise UsageError("the config needs a 'table' or a 'series' section")
    if series is not None and ("network" in series) != ("property" in series):
        raise UsageError("series.network and series.property go together")
    os.makedirs(out_dir, exist_ok=True)
    failed = False
    if table is not None:
        shapes = [_shape(s, "table.shapes") for s in table.get("shapes", [{}])]

        def progress(cell):
            log.info("%s t_max=%d point=%d %s %.3fs %s", cell.network, cell.t_max, cell.point,
                     cell.verdict, cell.runtime, cell.reason)
            if cell.verdict == "error":
                log.warning("cell %s t_max=%d point=%d failed: %s", cell.network, cell.t_max,
                            cell.point, cell.reason)

        path = os.path.join(out_dir, "table.csv")
        res = run_benchmark(shapes, n_points=table.get("points", 25),
                            t_values=_t_values(table.get("t_values", list(range(2, 21))),
                                               "table"),
                            delta=table.get("delta", 0.01), cfg=pipeline,
                            point_seed=table.get("point_seed", 0),
                            check_max=table.get("check_max", 6),
                            unroll_budget=table.get("unroll_budget", 60.0),
                            jobs=table.get("jobs", 1), csv_path=path, progress=progress)
        for f in res.flips:
            log.warning("verdict flip on %s point %d: not certified at t_max=%d, "
                        "certified at t_max=%d", *f)
        failed = all(c.verdict == "error" for c in res.cells)
        print(f"wrote {path}")
    if series is not None:
        path = os.path.join(out_dir, "series.csv")
        rows = comparison_series(_series_queries(series, cfg_dir),
                                 _t_values(series.get("t_values", [5, 20, 60, 180]), "series"),
                                 pipeline, series.get("unroll_budget", 600.0),
                                 progress=lambda row: log.info("%s", row))
        write_series_csv(rows, path)
        print(f"wrote {path}")
    return EXIT_ERROR if failed else 0


def cmd_unroll(args):
    net = _load_rnn(args.network)
    text = emit_network(unroll(net, args.t_max))
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _positive_int(s):
    n = int(s)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser():
    parser = argparse.ArgumentParser(
        prog="snapverify",
        description="Verify properties of ReLU recurrent networks with inductive invariants.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="check a property file against a network file")
    v.add_argument("network")
    v.add_argument("property")
    v.add_argument("--epsilon", type=float, default=PipelineConfig.epsilon,
                   help="bisection precision for invariant slopes")
    v.add_argument("--max-refinements", type=int, default=PipelineConfig.max_refinements)
    v.add_argument("--mode", choices=MODES, default="auto")
    v.add_argument("--time-budget", type=float, default=None,
                   help="seconds allowed per engine call")
    v.add_argument("--baseline-unroll", action="store_true",
                   help="also decide the query by unrolling, for cross-checking")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--json", action="store_true", help="print the machine-readable report")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="run a robustness sweep from a JSON config")
    b.add_argument("config")
    b.add_argument("--out", help="output directory (overrides the config)")
    b.set_defaults(func=cmd_bench)

    u = sub.add_parser("unroll", help="write the unrolled feed-forward network")
    u.add_argument("network")
    u.add_argument("t_max", type=_positive_int)
    u.add_argument("-o", "--output")
    u.set_defaults(func=cmd_unroll)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ParseError, PropertyError, UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
