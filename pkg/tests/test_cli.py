import csv
import json
from pathlib import Path
import subprocess
import sys

import numpy as np

from snapverify.cli import EXIT_ERROR, EXIT_HOLDS, EXIT_UNKNOWN, EXIT_VIOLATED, main
from snapverify.fileformats import REPORT_SCHEMA, emit_network, parse_network
from snapverify.network import FfnnNetwork, evaluate_ffnn, evaluate_rnn

from nets import two_layer_rnn

FIXTURES = Path(__file__).parent / "fixtures"
RUNNING = str(FIXTURES / "running.net")


def test_verify_holds(capsys):
    code = main(["verify", RUNNING, str(FIXTURES / "running_holds.prop")])
    out = capsys.readouterr().out
    assert code == EXIT_HOLDS
    assert "verdict: holds" in out and "engine time" in out
    line = next(s for s in out.splitlines() if "mem:1:0 <=" in s)
    alpha_u = float(line.split("<=")[-1].split("*")[0])
    assert 3.0 < alpha_u < 3.25


def test_verify_json_report(capsys):
    code = main(["verify", RUNNING, str(FIXTURES / "running_holds.prop"), "--json",
                 "--baseline-unroll"])
    doc = json.loads(capsys.readouterr().out)
    assert code == EXIT_HOLDS
    assert doc["schema"] == REPORT_SCHEMA and doc["verdict"] == "holds"
    assert doc["unrolled"] == "holds" and doc["refinements"] == 0
    assert 3.0 < doc["invariants"][0]["alpha_u"] < 3.25
    assert 0.0 <= doc["timings"]["engine_fraction"] <= 1.0


def test_verify_violated_dumps_trace(capsys):
    code = main(["verify", RUNNING, str(FIXTURES / "running_violated.prop")])
    out = capsys.readouterr().out
    assert code == EXIT_VIOLATED
    assert "violates the property at step 1" in out and "step 1: inputs [3]" in out
    main(["verify", RUNNING, str(FIXTURES / "running_violated.prop"), "--json"])
    doc = json.loads(capsys.readouterr().out)
    assert doc["step"] == 1 and doc["counterexample"] == [[3.0]]


def test_verify_unknown(tmp_path, capsys):
    net = tmp_path / "two.net"
    net.write_text(emit_network(two_layer_rnn()))
    prop = tmp_path / "q.prop"
    prop.write_text("snapverify-property 1\nt_max 5\ninput in:0 1.0 >= -3.0\n"
                    "input in:0 1.0 <= 3.0\ndisjunct\noutput out:0 1.0 >= 50.0\n")
    assert main(["verify", str(net), str(prop)]) == EXIT_UNKNOWN
    assert "verdict: unknown" in capsys.readouterr().out


def test_verify_modes(capsys):
    prop = str(FIXTURES / "running_holds.prop")
    for mode in ("single-unit", "layered", "milp", "incremental"):
        assert main(["verify", RUNNING, prop, "--mode", mode, "--json"]) == EXIT_HOLDS
        assert json.loads(capsys.readouterr().out)["mode"] == mode
    # a bisection mode that does not fit the network is a usage error
    code = main(["verify", str(FIXTURES / "coupled.net"), str(FIXTURES / "coupled_holds.prop"),
                 "--mode", "single-unit"])
    assert code == EXIT_ERROR and "memory unit" in capsys.readouterr().err


def test_malformed_weights_row(capsys):
    code = main(["verify", str(FIXTURES / "bad_weights.net"),
                 str(FIXTURES / "running_holds.prop")])
    err = capsys.readouterr().err
    assert code == EXIT_ERROR
    assert "bad_weights.net:4:13" in err and "expected 1" in err


def test_missing_file_and_bad_flags(capsys):
    assert main(["verify", "/nonexistent.net", "x.prop"]) == EXIT_ERROR
    assert main(["verify", RUNNING, str(FIXTURES / "running_holds.prop"),
                 "--epsilon", "-1"]) == EXIT_ERROR
    capsys.readouterr()


def test_unroll_running_fixture(tmp_path):
    out = tmp_path / "u.net"
    assert main(["unroll", RUNNING, "5", "-o", str(out)]) == 0
    ff = parse_network(out.read_text())
    assert isinstance(ff, FfnnNetwork) and ff.n_neurons == 15
    assert emit_network(ff) == out.read_text()
    rnn = parse_network(Path(RUNNING).read_text())
    x = np.array([0.5, 1.5, -1.0, -3.0, 2.0])
    assert np.array_equal(np.asarray(evaluate_ffnn(ff, x)),
                          evaluate_rnn(rnn, x.reshape(5, 1)).outputs[:, 0])


def test_unroll_single_step(capsys):
    assert main(["unroll", RUNNING, "1"]) == 0
    ff = parse_network(capsys.readouterr().out)
    assert ff.n_neurons == 3 and ff.outputs == ("out:0@1",)


def test_unroll_rejects_feedforward_input(tmp_path, capsys):
    ff = tmp_path / "ff.net"
    main(["unroll", RUNNING, "2", "-o", str(ff)])
    assert main(["unroll", str(ff), "2"]) == EXIT_ERROR
    assert "feed-forward" in capsys.readouterr().err


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_bench_smoke(tmp_path):
    assert main(["bench", str(FIXTURES / "bench_smoke.json"), "--out", str(tmp_path)]) == 0
    series = read_csv(tmp_path / "series.csv")
    assert list(series[0]) == ["t_max", "method", "mean_seconds", "certified", "total"]
    assert [(r["t_max"], r["method"]) for r in series] == [
        ("3", "invariant"), ("3", "unrolling"), ("6", "invariant"), ("6", "unrolling")]
    # out <= 3 t, so the threshold 16 is safe up to t_max = 5 and violated at 6
    assert [r["certified"] for r in series] == ["1", "1", "0", "0"]
    table = read_csv(tmp_path / "table.csv")
    assert [r["t_max"] for r in table] == ["2", "3"]
    assert all(r["errors"] == "0" and r["soundness_violations"] == "0" for r in table)
    again = tmp_path / "again"
    main(["bench", str(FIXTURES / "bench_smoke.json"), "--out", str(again)])
    strip = lambda rows: [{k: v for k, v in r.items() if "runtime" not in k} for r in rows]  # noqa: E731
    assert strip(read_csv(again / "table.csv")) == strip(table)


def test_bench_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"table": {"points": 2,}}')
    assert main(["bench", str(bad)]) == EXIT_ERROR
    assert "bad.json:1:" in capsys.readouterr().err
    bad.write_text('{"tabel": {}}')
    assert main(["bench", str(bad)]) == EXIT_ERROR
    bad.write_text('{"table": {"t_values": [0]}}')
    assert main(["bench", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
    bad.write_text('{"series": {"network": "x.net"}}')
    assert main(["bench", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
    assert "go together" in capsys.readouterr().err


def test_module_entry_point_exit_code():
    res = subprocess.run([sys.executable, "-m", "snapverify", "verify", RUNNING,
                          str(FIXTURES / "running_violated.prop")], capture_output=True,
                         text=True)
    assert res.returncode == EXIT_VIOLATED and "verdict: violated" in res.stdout
