import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snapverify.network import (IDENTITY, Layer, RnnNetwork, StructureError, as_ffnn,
                                evaluate_ffnn, evaluate_ffnn_batch, evaluate_rnn,
                                evaluate_rnn_batch, memory_free, snapshot, unroll)

from nets import coupled_rnn, random_rnn, running_rnn, two_layer_rnn, two_relu_ffnn


def test_two_relu_forward():
    out, a = evaluate_ffnn(two_relu_ffnn(), [4.0], full=True)
    assert out.tolist() == [4.0]
    assert (a["h:1:0"], a["h:1:1"]) == (4.0, 0.0)
    assert evaluate_ffnn(two_relu_ffnn(), [-10.0]).tolist() == [20.0]


def test_zero_input_zero_bias_gives_zero():
    rng = np.random.default_rng(0)
    base = random_rnn(rng)
    layers = [Layer(l.W, np.zeros(l.size), None, l.activation) for l in base.layers]
    net = as_ffnn(RnnNetwork(base.input_dim, layers))
    assert np.all(evaluate_ffnn(net, np.zeros(net.input_dim)) == 0.0)


def test_ffnn_dimension_mismatch():
    with pytest.raises(StructureError):
        evaluate_ffnn(two_relu_ffnn(), [1.0, 2.0])


def test_running_example_trace():
    tr = evaluate_rnn(running_rnn(), [[0.5], [1.5], [-1.0], [-3.0]])
    assert tr.values[0][:, 0].tolist() == [0.5, 2.0, 1.0, 0.0]
    assert tr.memory[0][:, 0].tolist() == [0.0, 0.5, 2.0, 1.0]
    assert tr.outputs[:, 0].tolist() == [0.5, 2.0, 1.0, 0.0]


def test_coupled_layer_trace():
    # hand-applied recurrences: v1 = ReLU(m1 + m2 - x), v2 = ReLU(-m1 + m2 + 2x)
    tr = evaluate_rnn(coupled_rnn(), [[3.0], [3.0]])
    assert tr.values[0][:, 0].tolist() == [0.0, 3.0]
    assert tr.values[0][:, 1].tolist() == [6.0, 12.0]
    assert tr.outputs[:, 0].tolist() == [6.0, 15.0]


def test_empty_sequence_rejected():
    with pytest.raises(StructureError):
        evaluate_rnn(running_rnn(), np.zeros((0, 1)))


def test_structural_checks():
    with pytest.raises(StructureError):
        RnnNetwork(2, (Layer([[1.0]]), Layer([[1.0]], activation=IDENTITY)))
    with pytest.raises(StructureError):
        RnnNetwork(1, (Layer([[1.0]], activation=IDENTITY), Layer([[1.0]], activation=IDENTITY)))
    with pytest.raises(StructureError):
        Layer([[1.0]], H=[[1.0, 0.0]])


def test_memoryless_rnn_matches_stepwise_ffnn():
    rng = np.random.default_rng(3)
    for _ in range(20):
        net = memory_free(random_rnn(rng))
        X = rng.normal(size=(5, net.input_dim))
        tr = evaluate_rnn(net, X)
        ff = as_ffnn(net)
        for t in range(5):
            assert np.allclose(tr.outputs[t], evaluate_ffnn(ff, X[t]), atol=0, rtol=0)


def test_unroll_running_example_shape():
    u = unroll(running_rnn(), 5)
    assert u.n_neurons == 15
    inter = sum(1 for layer in u.layers for src in layer.sources
                if src.layer > 0 and np.any(src.weights) and src.columns is not None)
    assert inter == 4


def test_unroll_single_step_is_memory_free():
    rng = np.random.default_rng(8)
    net = random_rnn(rng)
    u = unroll(net, 1)
    ff = as_ffnn(memory_free(net))
    x = rng.normal(size=net.input_dim)
    assert np.array_equal(evaluate_ffnn(u, x), evaluate_ffnn(ff, x))


def test_unroll_equivalence_random():
    rng = np.random.default_rng(2023)
    for _ in range(50):
        net = random_rnn(rng, max_units=3)
        T = int(rng.integers(1, 7))
        X = rng.normal(size=(T, net.input_dim)) * 2
        tr = evaluate_rnn(net, X)
        out = evaluate_ffnn(unroll(net, T), X.reshape(-1))
        assert np.allclose(out.reshape(T, -1), tr.outputs, atol=1e-9, rtol=0)


def test_snapshot_running_example():
    net = running_rnn()
    snap = snapshot(net)
    assert set(snap.ffnn.input_names) == {"in:0", "t", "mem:1:0"}
    assert snap.n_neurons == net.n_neurons() + 1 == 5
    hidden = snap.ffnn.layers[0]
    weights = sorted(float(s.weights[0, 0]) for s in hidden.sources)
    assert weights == [1.0, 1.0]
    # t is isolated
    t_pos = snap.ffnn.index["t"][1]
    for layer in snap.ffnn.layers:
        for s in layer.sources:
            if s.layer == 0:
                assert t_pos not in s.columns


def test_snapshot_two_layer_inputs():
    snap = snapshot(two_layer_rnn())
    assert set(snap.ffnn.input_names) == {"t", "mem:1:0", "mem:2:0", "in:0"}


def test_snapshot_without_memory_has_no_memory_edges():
    net = memory_free(two_layer_rnn())
    snap = snapshot(net)
    assert snap.memory_vars == {}
    assert snap.n_neurons == net.n_neurons() + 1


def test_snapshot_equals_step_given_memory():
    rng = np.random.default_rng(17)
    for _ in range(30):
        net = random_rnn(rng)
        T = 4
        X = rng.normal(size=(T, net.input_dim))
        tr = evaluate_rnn(net, X)
        snap = snapshot(net)
        for t in range(1, T + 1):
            a = tr.assignment(t)
            x = [a[n] for n in snap.ffnn.input_names]
            assert np.allclose(evaluate_ffnn(snap.ffnn, x), tr.outputs[t - 1], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_trace_invariants(seed, T):
    rng = np.random.default_rng(seed)
    net = random_rnn(rng)
    tr = evaluate_rnn(net, rng.normal(size=(T, net.input_dim)) * 3)
    assert snapshot(net).n_neurons == net.n_neurons() + 1
    for L, layer in enumerate(net.layers):
        assert np.all(tr.memory[L][0] == 0.0)
        assert np.array_equal(tr.memory[L][1:], tr.values[L][:-1])
        if layer.activation == "relu":
            assert np.all(tr.values[L] >= 0.0)


def test_batch_matches_single():
    rng = np.random.default_rng(4)
    net = unroll(random_rnn(rng), 3)
    X = rng.normal(size=(10, net.input_dim))
    out, _ = evaluate_ffnn_batch(net, X)
    for i in range(10):
        assert np.allclose(out[i], evaluate_ffnn(net, X[i]))


def test_output_layer_memory_is_supported():
    net = RnnNetwork(1, (Layer([[1.0]]), Layer([[1.0]], H=[[0.5]], activation=IDENTITY)))
    tr = evaluate_rnn(net, [[1.0], [1.0], [1.0]])
    assert tr.outputs[:, 0].tolist() == [1.0, 1.5, 1.75]
    assert net.memory_units() == [(2, 0)]
    out = evaluate_ffnn(unroll(net, 3), [1.0, 1.0, 1.0])
    assert out.tolist() == [1.0, 1.5, 1.75]


def test_batch_evaluation_matches_single_traces():
    rng = np.random.default_rng(8)
    for _ in range(20):
        net = random_rnn(rng)
        X = rng.uniform(-2, 2, size=(5, 4, net.input_dim))
        vals = evaluate_rnn_batch(net, X)
        for i in range(5):
            trace = evaluate_rnn(net, X[i])
            for t in range(1, 5):
                for name, v in trace.assignment(t).items():
                    assert vals[name][i, t - 1] == pytest.approx(v, abs=1e-12)
