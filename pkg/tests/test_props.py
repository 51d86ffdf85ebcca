import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from snapverify.props import (EQ, GE, LE, InfeasibleConstraints, InputProperty,
                              LinConstraint, LinExpr, OutputProperty, PropertyError,
                              RnnQuery, UnboundedVariable, box, derive_box, eq, ge,
                              instantiate_at, le, negate_bound, var)

from nets import running_rnn

t = var("t")
x = var("in:0")
m = var("mem:1:0")


def test_instantiate_time_free():
    P = InputProperty(box("in:0", -3, 3))
    assert instantiate_at(P, 4) == P.constraints


def test_instantiate_invariant_bound():
    (c,) = instantiate_at(InputProperty((le(m, 3 * (t - 1)),)), 5)
    assert c == le(m, 12)


def test_instantiate_affine_output():
    P = InputProperty((ge(x, 4 * t), le(x, 5 * t)))
    assert instantiate_at(P, 2) == (ge(x, 8), le(x, 10))


def test_instantiate_out_of_range():
    with pytest.raises(PropertyError):
        instantiate_at(InputProperty(), 0)
    with pytest.raises(PropertyError):
        instantiate_at(InputProperty(), 6, t_max=5)


def test_negate_examples():
    v = var("h:1:0")
    assert negate_bound(le(v, 3 * t)) == ge(v, 3 * t)
    assert negate_bound(ge(v, 0)) == le(v, 0)
    assert negate_bound(le(2 * v - t, 5)) == ge(2 * v - t, 5)
    with pytest.raises(PropertyError):
        negate_bound(eq(v, 1))


def test_normalised_equality():
    assert le(x, 3) == le(x - 3, 0) == LinConstraint(x - 3, LE)
    assert hash(le(x, 3)) == hash(le(x - 3, 0))


coef = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["in:0", "in:1", "t", "out:0"]), coef), max_size=5),
       coef, st.sampled_from([LE, GE, EQ]), st.integers(1, 20),
       st.lists(coef, min_size=3, max_size=3))
def test_instantiate_commutes_with_evaluation(terms, const, rel, step, vals):
    c = LinConstraint(LinExpr(tuple(terms), const), rel)
    a = {"in:0": vals[0], "in:1": vals[1], "out:0": vals[2], "t": float(step)}
    (inst,) = instantiate_at((c,), step)
    assert "t" not in inst.variables
    assert inst.expr.evaluate(a) == pytest.approx(c.expr.evaluate(a), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["a", "b", "t"]), coef), max_size=4), coef,
       st.sampled_from([LE, GE]))
def test_negation_is_involution(terms, const, rel):
    c = LinConstraint(LinExpr(tuple(terms), const), rel)
    assert negate_bound(negate_bound(c)) == c


def test_derive_box_simple():
    b = derive_box(InputProperty(box("in:0", -3, 3)), t_range=(1, 5))
    assert b == {"in:0": (-3.0, 3.0), "t": (1.0, 5.0)}


def test_derive_box_time_dependent():
    b = derive_box((le(m, 3 * (t - 1)), ge(m, 0)), t_range=(1, 5))
    assert b["mem:1:0"] == pytest.approx((0.0, 12.0))


def test_derive_box_unbounded():
    with pytest.raises(UnboundedVariable) as err:
        derive_box((le(x, 5),))
    assert err.value.var == "in:0"


def test_derive_box_infeasible():
    with pytest.raises(InfeasibleConstraints):
        derive_box((le(x, 1), ge(x, 2)))


def _lp_box(A, b, n):
    out = []
    for i in range(n):
        c = np.zeros(n)
        c[i] = 1.0
        lo = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        hi = linprog(-c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        out.append((lo.fun, -hi.fun))
    return out


def test_derive_box_sound_and_matches_lp_on_random_polytopes():
    rng = np.random.default_rng(12)
    names = ["in:0", "in:1", "in:2"]
    for _ in range(20):
        # a box plus a few random cuts through a known interior point
        centre = rng.uniform(-2, 2, size=3)
        cons = [c for k, n in enumerate(names) for c in box(n, centre[k] - 2, centre[k] + 2)]
        A = [np.eye(3)[k] * s for k in range(3) for s in (-1, 1)]
        b = [-(centre[k] - 2) if s < 0 else centre[k] + 2 for k in range(3) for s in (-1, 1)]
        for _ in range(3):
            a = rng.normal(size=3)
            rhs = float(a @ centre + rng.uniform(0.1, 1.0))
            cons.append(le(sum((float(a[k]) * var(n) for k, n in enumerate(names)), LinExpr()), rhs))
            A.append(a)
            b.append(rhs)
        bx = derive_box(cons)
        ref = _lp_box(np.array(A), np.array(b), 3)
        for k, n in enumerate(names):
            # propagation may be looser than the LP but never tighter
            assert bx[n][0] <= ref[k][0] + 1e-7 and bx[n][1] >= ref[k][1] - 1e-7
        # 1000 satisfying assignments lie inside the box
        pts = rng.uniform(centre - 2, centre + 2, size=(20000, 3))
        ok = np.all(pts @ np.array(A).T <= np.array(b), axis=1)
        pts = pts[ok][:1000]
        for k, n in enumerate(names):
            assert np.all(pts[:, k] >= bx[n][0] - 1e-9) and np.all(pts[:, k] <= bx[n][1] + 1e-9)


def test_rnn_query_validation():
    net = running_rnn()
    P = InputProperty(box("in:0", -3, 3))
    Q = OutputProperty(((ge("out:0", 16),),))
    RnnQuery(P, net, Q, 5)
    with pytest.raises(PropertyError):
        RnnQuery(P, net, OutputProperty(((ge("out:0", 16),),), fixed_step=6), 5)
    with pytest.raises(PropertyError):
        RnnQuery(InputProperty(box("out:0", 0, 1)), net, Q, 5)
    with pytest.raises(PropertyError):
        RnnQuery(P, net, OutputProperty(((ge("out:3", 1),),)), 5)
    with pytest.raises(PropertyError):
        OutputProperty(())
