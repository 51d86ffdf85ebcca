from pathlib import Path

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from snapverify.fileformats import (ParseError, emit_network, emit_property, parse_network,
                                    parse_property)
from snapverify.network import evaluate_ffnn, evaluate_rnn, unroll
from snapverify.props import InputProperty, OutputProperty, RnnQuery, eq, ge, le, var

from nets import box_query, coupled_rnn, random_rnn, running_rnn

FIXTURES = Path(__file__).parent / "fixtures"


def same_rnn(a, b):
    assert a.input_dim == b.input_dim and len(a.layers) == len(b.layers)
    for x, y in zip(a.layers, b.layers):
        assert np.array_equal(x.W, y.W) and np.array_equal(x.b, y.b)
        assert (x.H is None) == (y.H is None)
        assert x.H is None or np.array_equal(x.H, y.H)
        assert x.activation == y.activation


@pytest.mark.parametrize("name", sorted(p.name for p in FIXTURES.glob("*.net")
                                        if p.name != "bad_weights.net"))
def test_network_fixtures_are_canonical(name):
    text = (FIXTURES / name).read_text()
    assert emit_network(parse_network(text)) == text


@pytest.mark.parametrize("name", sorted(p.name for p in FIXTURES.glob("*.prop")))
def test_property_fixtures_are_canonical(name):
    net = parse_network((FIXTURES / (name.split("_")[0] + ".net")).read_text())
    text = (FIXTURES / name).read_text()
    assert emit_property(parse_property(text, net)) == text


def test_running_fixture_parses_to_running_network():
    same_rnn(parse_network((FIXTURES / "running.net").read_text()), running_rnn())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_network_round_trip(seed):
    rng = np.random.default_rng(seed)
    net = random_rnn(rng)
    text = emit_network(net)
    back = parse_network(text)
    same_rnn(net, back)
    assert emit_network(back) == text
    X = rng.uniform(-2, 2, size=(4, net.input_dim))
    assert np.array_equal(evaluate_rnn(net, X).outputs, evaluate_rnn(back, X).outputs)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_unrolled_network_round_trip(seed, t_max):
    rng = np.random.default_rng(seed)
    net = random_rnn(rng)
    ff = unroll(net, t_max)
    text = emit_network(ff)
    back = parse_network(text)
    assert emit_network(back) == text
    X = rng.uniform(-2, 2, size=(t_max, net.input_dim))
    out = evaluate_ffnn(back, X.reshape(-1))
    expected = evaluate_rnn(net, X).outputs
    assert np.array_equal(np.asarray(out).reshape(t_max, -1), expected)


def test_property_round_trip_with_time_and_fixed_step():
    t = var("t")
    P = InputProperty((ge("in:0", -1.5), le(var("in:0") + 0.25 * t, 2.0)))
    Q = OutputProperty(((ge(var("out:0") - 3 * t, 0.5), le("h:1:1", 4.0)),
                        (eq("out:0", 1e-07),)), fixed_step=2)
    q = RnnQuery(P, coupled_rnn(), Q, 3)
    text = emit_property(q)
    back = parse_property(text, coupled_rnn())
    assert back.t_max == 3 and back.Q.fixed_step == 2
    assert back.P == q.P and back.Q == q.Q
    assert emit_property(back) == text


def test_property_parses_to_query():
    net = running_rnn()
    q = parse_property((FIXTURES / "running_holds.prop").read_text(), net)
    ref = box_query(net, -3, 3, 16, 5)
    assert q.P == ref.P and q.Q == ref.Q and q.t_max == 5


def test_comments_and_blank_lines_are_ignored():
    text = "# a network\n\nsnapverify-network 1  # version\n" + \
        (FIXTURES / "running.net").read_text().split("\n", 1)[1]
    same_rnn(parse_network(text), running_rnn())


@pytest.mark.parametrize("text, line, column, fragment", [
    ("", 1, 1, "end of file"),
    ("snapverify-network 2\n", 1, 20, "version"),
    ("snapverify-network 1\nrnn inputs 1\nlayer relu 1\nweights 1.0 2.0\n", 4, 13, "entries"),
    ("snapverify-network 1\nrnn inputs 1\nlayer relu 1\nweights x\n", 4, 9, "not a number"),
    ("snapverify-network 1\nrnn inputs 1\nlayer relu 1\nweights nan\n", 4, 9, "non-finite"),
    ("snapverify-network 1\nrnn inputs 1\nlayer tanh 1\n", 3, 7, "activation"),
    ("snapverify-network 1\nrnn inputs 1\nlayer relu 1\nweights 1.0\nbias 0.0\n", 6, 1,
     "hidden layer"),
    ("snapverify-network 1\nffnn inputs a\nlayer relu b\nsource 1\n", 4, 8, "cannot read"),
    ("snapverify-network 1\nffnn inputs a\nlayer relu b\nsource 0 columns 3\n", 4, 18,
     "no neuron"),
])
def test_network_diagnostics(text, line, column, fragment):
    with pytest.raises(ParseError) as err:
        parse_network(text)
    assert (err.value.line, err.value.column) == (line, column)
    assert fragment in str(err.value)


@pytest.mark.parametrize("body, line, fragment", [
    ("t_max 0\n", 2, ">= 1"),
    ("t_max 5\ninput in:0 1.0 -3.0\n", 3, "relation"),
    ("t_max 5\ninput in:0 >= -3.0\n", 3, "pairs"),
    ("t_max 5\ninput in:0 1.0 >= -3.0 4\n", 3, "single constant"),
    ("t_max 5\ninput in:0 1.0 >= -3.0\n", 4, "disjunct"),
    ("t_max 5\ninput out:0 1.0 >= -3.0\ndisjunct\n", 5, "non-input"),
    ("t_max 5\nfixed_step 6\ndisjunct\noutput out:0 1.0 >= 1.0\n", 6, "fixed step"),
    ("t_max 5\ndisjunct\noutput in:0 1.0 >= 0.0\ninput in:0 1.0 >= 0.0\n", 5, "disjunct"),
])
def test_property_diagnostics(body, line, fragment):
    with pytest.raises(ParseError) as err:
        parse_property("snapverify-property 1\n" + body, running_rnn())
    assert err.value.line == line and fragment in str(err.value)
