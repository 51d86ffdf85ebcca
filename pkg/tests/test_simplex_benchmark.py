import importlib.util
from pathlib import Path

import pytest

SCRIPT = Path(__file__).parent.parent / "benchmarks" / "bench_simplex.py"


def test_backend_benchmark_runs_and_agrees(capsys):
    pytest.importorskip("snapverify.solver._simplex_core")
    spec = importlib.util.spec_from_file_location("bench_simplex", SCRIPT)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    # the script asserts that both backends reach the same optima and verdicts
    mod.main(["--sizes", "10", "--t-values", "2", "--repeat", "1"])
    out = capsys.readouterr().out.splitlines()
    assert out[0].split() == ["problem", "python", "s", "cython", "s", "speedup"]
    assert len(out) == 3
