"""Compare the compiled simplex kernel against the numpy fallback.

Solves the same random feasible LPs and verification MILPs with both
backends, checks that the optima agree and prints median timings.

    python3 benchmarks/bench_simplex.py --sizes 20 40 80 --repeat 5
"""
import argparse
import statistics
import time

import numpy as np

from snapverify.bench import (NetShape, RobustnessSpec, build_robustness_query,
                              generate_network, random_points)
from snapverify.ffnn_verifier import verify
from snapverify.pipeline import unrolled_query
from snapverify.solver import LpProblem, Status, solve_lp


def random_lp(rng, n):
    """Bounded LP with ``n`` variables, ``n`` rows and a known feasible point."""
    m = n
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(-1, 1, size=n)
    slack = rng.uniform(0.1, 1.0, size=m)
    senses = tuple(rng.choice(["<=", ">="], size=m))
    rhs = np.where(np.array(senses) == "<=", A @ x0 + slack, A @ x0 - slack)
    return LpProblem(rng.normal(size=n), A, senses, rhs, -5 * np.ones(n), 5 * np.ones(n))


def timed(fn, repeat):
    runs, out = [], None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        runs.append(time.perf_counter() - start)
    return statistics.median(runs), out


def bench_lps(sizes, repeat, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        p = random_lp(rng, n)
        t_py, a = timed(lambda: solve_lp(p, backend="python"), repeat)
        t_cy, b = timed(lambda: solve_lp(p, backend="cython"), repeat)
        assert a.status is b.status is Status.OPTIMAL
        assert abs(a.value - b.value) <= 1e-6 * max(1.0, abs(a.value))
        rows.append((f"lp n={n}", t_py, t_cy))
    return rows


def bench_queries(t_values, repeat, seed):
    """Unrolled robustness queries on a small generated network."""
    shape = NetShape(input_dim=4, recurrent=(2,), dense=(8, 8), output_dim=3, seed=seed)
    net = generate_network(shape)
    point = random_points(shape, 1, seed)[0]
    rows = []
    for t in t_values:
        q = build_robustness_query(net, RobustnessSpec(point, 0.5, t))
        ff = unrolled_query(q, t, q.Q.disjuncts[0])
        t_py, a = timed(lambda: verify(ff, sample=False, symbolic=False, backend="python"),
                        repeat)
        t_cy, b = timed(lambda: verify(ff, sample=False, symbolic=False, backend="cython"),
                        repeat)
        assert a.sat == b.sat
        rows.append((f"unrolled milp t_max={t}", t_py, t_cy))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 40, 80])
    ap.add_argument("--t-values", type=int, nargs="+", default=[2, 4, 6])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    try:
        from snapverify.solver import _simplex_core  # noqa: F401
    except ImportError:
        raise SystemExit("the compiled kernel is not built; run pip install -e . first")
    rows = bench_lps(args.sizes, args.repeat, args.seed)
    rows += bench_queries(args.t_values, args.repeat, args.seed)
    print(f"{'problem':<26}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, t_py, t_cy in rows:
        print(f"{name:<26}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
