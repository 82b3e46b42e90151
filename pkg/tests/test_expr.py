import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lc_homog.expr import (Binary, Const, EvalError, ParseError, Unary, UnknownIdentifier, Var,
                           VectorExpr, evaluate, parse, to_string, uses_variable)


def ev(text, x=0.0, y=0.0, t=0.0):
    return evaluate(parse(text), x, y, t)


def test_trig_product_vanishes_at_centre():
    assert abs(ev("sin(pi*x)*cos(pi*y)", 0.5, 0.5)) < 1e-15


def test_power_plus_time():
    assert ev("x^2 + t", 2, 0, 3) == 7


def test_unclosed_call_offset():
    with pytest.raises(ParseError) as exc:
        parse("sin(")
    assert exc.value.offset == 4


@pytest.mark.parametrize("text,value", [("-x^2", -9.0), ("2^3^2", 512.0), ("-2^2", -4.0),
                                        ("(-2)^2", 4.0), ("2*-x", -6.0), ("1-2-3", -4.0),
                                        ("8/4/2", 1.0), ("abs(-x)+sqrt(9)", 6.0),
                                        ("exp(0)", 1.0), ("1.5e1", 15.0), (".5", 0.5)])
def test_precedence_and_associativity(text, value):
    assert ev(text, x=3) == value


def test_division_by_zero_is_eval_error():
    with pytest.raises(EvalError):
        ev("1/ (x-1)", x=1)


def test_domain_error_is_eval_error():
    with pytest.raises(EvalError):
        ev("sqrt(x)", x=-1)


@pytest.mark.parametrize("text,offset", [("", 0), ("x +", 3), ("(x", 2), ("x)", 1),
                                         ("2 $ 3", 2), ("sin x", 4), ("x y", 2)])
def test_parse_error_offsets(text, offset):
    with pytest.raises(ParseError) as exc:
        parse(text)
    assert exc.value.offset == offset


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as exc:
        parse("2*z")
    assert exc.value.offset == 2
    with pytest.raises(UnknownIdentifier):
        parse("tan(x)")


def test_non_ascii_rejected_with_byte_offset():
    with pytest.raises(ParseError) as exc:
        parse("x + é")
    assert exc.value.offset == 4


def test_deep_nesting_is_parse_error():
    with pytest.raises(ParseError):
        parse("(" * 200 + "x" + ")" * 200)
    with pytest.raises(ParseError):
        parse("-" * 300 + "x")


def test_pi_is_folded():
    assert parse("pi") == Const(math.pi)


def test_vectorised_evaluation():
    x = np.linspace(0, 1, 5)
    np.testing.assert_allclose(ev("x*y", x, 2.0), 2 * x)


def test_vector_expr():
    v = VectorExpr("sin(2*pi*y)", "t")
    a, b = v(np.zeros(3), np.full(3, 0.25), 2.0)
    np.testing.assert_allclose(a, 1.0)
    np.testing.assert_allclose(b, 2.0)
    assert v.time_dependent and not VectorExpr("x", "y").time_dependent
    assert VectorExpr.of(["1", "2"]).to_list() == ["1", "2"]
    assert uses_variable(parse("x+sin(t)"), "t")


leaves = st.one_of(st.builds(Const, st.floats(-5, 5, allow_nan=False)),
                   st.sampled_from([Var("x"), Var("y"), Var("t")]))
trees = st.recursive(
    leaves,
    lambda sub: st.one_of(
        st.builds(Unary, st.sampled_from(["neg", "sin", "cos", "exp", "abs"]), sub),
        st.builds(Binary, st.sampled_from(["+", "-", "*"]), sub, sub),
        st.builds(Binary, st.just("^"), sub, st.builds(Const, st.integers(0, 3).map(float)))),
    max_leaves=12)


def _safe(ast, x, y, t):
    try:
        return evaluate(ast, x, y, t)
    except EvalError:
        return None


@given(trees)
def test_pretty_print_round_trip(ast):
    rng = np.random.default_rng(0)
    again = parse(to_string(ast))
    x, y, t = rng.uniform(-1, 1, (3, 100))
    a, b = _safe(ast, x, y, t), _safe(again, x, y, t)
    if a is None or b is None:
        assert a is None and b is None
        return
    np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-300)


alphabet = st.sampled_from(list("xyt0123456789.+-*/^() e") + ["sin", "cos", "pi", "sqrt", "abs"])


@settings(max_examples=300)
@given(st.lists(alphabet, max_size=60).map("".join))
def test_token_soup_never_crashes(text):
    try:
        parse(text)
    except ParseError:
        pass


@settings(max_examples=300)
@given(st.binary(max_size=256))
def test_random_bytes_never_crash(raw):
    try:
        parse(raw.decode("latin-1"))
    except ParseError:
        pass
