import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impdelay import ConfigurationError, EvaluationError
from impdelay.expressions import ExpressionSyntaxError, parse_expression


def test_arithmetic_example():
    e = parse_expression("x0[0]*a[0] - sin(t)", {"t": 0, "x0": 1, "a": 1})
    assert e.evaluate(t=0.0, x0=np.array([2.0]), a=np.array([3.0])) == 6.0


def test_step_is_open_at_its_switch_time():
    e = parse_expression("step(0)", {"t": 0})
    assert e.evaluate(t=0.0) == 0.0 and e.evaluate(t=0.5) == 1.0
    assert e.nonsmooth


@pytest.mark.parametrize("text, value", [
    ("2^3^2", 512.0), ("-2^2", -4.0), ("2*3+4", 10.0), ("2+3*4", 14.0), ("8/4/2", 1.0),
    ("(1+2)*3", 9.0), ("2^-1", 0.5), ("-(3)", -3.0), ("min(3, 1, 2)", 1.0), ("max(1, 4)", 4.0),
    ("sqrt(16) + abs(-2)", 6.0), ("exp(0) + log(1)", 1.0), ("cos(pi)", -1.0), ("1e-3*1000", 1.0),
])
def test_precedence_and_functions(text, value):
    assert parse_expression(text).evaluate() == pytest.approx(value, abs=1e-15)


def test_vectorized_evaluation_broadcasts():
    e = parse_expression("x0[1] * t", {"t": 0, "x0": 2})
    out = e.evaluate(t=np.array([1.0, 2.0]), x0=np.array([[0.0, 3.0], [0.0, 4.0]]))
    assert out.tolist() == [3.0, 8.0]


@pytest.mark.parametrize("text, col", [("1 +", 4), ("2 * (3", 7), ("1 $ 2", 3), ("sin 1", 1)])
def test_syntax_errors_are_located(text, col):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(text)
    assert info.value.line == 1 and info.value.col == col


def test_multiline_location():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression("1 +\n  * 2")
    assert (info.value.line, info.value.col) == (2, 3)


def test_unknown_identifier_and_arity():
    with pytest.raises(ConfigurationError, match="unknown identifier"):
        parse_expression("y + 1", {"t": 0})
    with pytest.raises(ConfigurationError):
        parse_expression("sin(1, 2)")
    with pytest.raises(ConfigurationError):
        parse_expression("max(1)")
    with pytest.raises(ConfigurationError, match="must be indexed"):
        parse_expression("x0", {"x0": 2})
    with pytest.raises(ConfigurationError):
        parse_expression("")


def test_evaluation_errors_are_located():
    with pytest.raises(EvaluationError, match="column 2"):
        parse_expression("1/t", {"t": 0}).evaluate(t=0.0)
    with pytest.raises(EvaluationError, match="log"):
        parse_expression("log(t)", {"t": 0}).evaluate(t=-1.0)


def test_dependency_tracking():
    e = parse_expression("x1 + sin(t)", {"t": 0, "x0": 1, "x1": 1})
    assert e.depends_on("x1") and not e.depends_on("x0") and not e.nonsmooth


leaf = st.one_of(st.floats(-4, 4, allow_nan=False).map(lambda v: f"{v:.6g}"), st.just("t"))


def combine(children):
    op = st.sampled_from(["+", "-", "*"])
    return st.one_of(
        st.tuples(children, op, children).map(lambda p: f"({p[0]} {p[1]} {p[2]})"),
        children.map(lambda c: f"(-{c})"),
        children.map(lambda c: f"sin({c})"),
        st.tuples(children, children).map(lambda p: f"max({p[0]}, {p[1]})"),
    )


exprs = st.recursive(leaf, combine, max_leaves=12)


@given(exprs, st.floats(-2, 2))
@settings(max_examples=200, deadline=None)
def test_matches_python_evaluation(text, t):
    got = parse_expression(text, {"t": 0}).evaluate(t=t)
    want = eval(text.replace("^", "**"), {"sin": math.sin, "max": max, "t": t})
    assert float(got) == pytest.approx(want, rel=1e-12, abs=1e-12)
