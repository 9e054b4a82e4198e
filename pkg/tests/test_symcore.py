from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import R2, R3, polys
from normalforms.symcore import (
    Chart,
    ChartMismatch,
    Jet,
    MissingAssignment,
    NotDivisible,
    ParseError,
    Poly,
    SymbolicError,
    UnknownVariable,
    differentiate,
    exact_divide,
    parse_scalar,
    substitute,
)

D = Chart("D", ["x", "y_", "t"])


def test_parse_terms():
    f = parse_scalar(R2, "y^2*x - 3/2*y")
    assert f.terms == {(1, 2): Fraction(1), (0, 1): Fraction(-3, 2)}


def test_parse_zero_is_empty():
    assert parse_scalar(R2, "0").terms == {}


def test_parse_unknown_variable():
    with pytest.raises(UnknownVariable, match="z"):
        parse_scalar(R2, "x*z")


def test_parse_error_has_position():
    with pytest.raises(ParseError) as exc:
        parse_scalar(R2, "x + * y")
    assert exc.value.pos == 4


def test_chart_blocks_must_partition():
    with pytest.raises(SymbolicError):
        Chart("bad", ["x", "y"], transverse=["x"], normal=[])
    with pytest.raises(SymbolicError):
        Chart("dup", ["x", "x"])


@given(polys(R3, degree=4))
def test_print_parse_fixed_point(f):
    assert parse_scalar(R3, str(f)) == f
    assert str(parse_scalar(R3, str(f))) == str(f)


def test_differentiate_examples():
    assert differentiate(parse_scalar(R2, "x*y^2"), "y") == parse_scalar(R2, "2*x*y")
    assert differentiate(parse_scalar(R2, "y"), "x").is_zero()
    with pytest.raises(UnknownVariable):
        differentiate(parse_scalar(R2, "y"), "q")


def _expand_mixed(f):
    # oracle: term-by-term double power rule
    out = {}
    for (a, b, c), k in f.terms.items():
        if a and b:
            e = (a - 1, b - 1, c)
            out[e] = out.get(e, 0) + k * a * b
    return Poly(R3, out)


@given(polys(R3, degree=4, max_terms=6))
def test_mixed_partials_commute(f):
    fxy = differentiate(differentiate(f, "x"), "y")
    assert fxy == differentiate(differentiate(f, "y"), "x")
    assert fxy == _expand_mixed(f)


def test_substitute_rescaling():
    B = Chart("B", ["x", "y"])
    f = parse_scalar(B, "y^2")
    g = substitute(f, {"x": D.var("x"), "y": D.var("t") * D.var("y_")}, target=D)
    assert g == parse_scalar(D, "t^2*y_^2")


@given(polys(R3))
def test_substitute_identity(f):
    assert substitute(f, {c: R3.var(c) for c in R3.coords}) == f


def test_substitute_cancellation():
    U = Chart("U", ["u"])
    f = parse_scalar(R2, "x + y")
    u2 = U.var("u") ** 2
    assert substitute(f, {"x": u2, "y": -u2}, target=U).is_zero()


def test_substitute_errors():
    f = parse_scalar(R2, "x + y")
    with pytest.raises(MissingAssignment):
        substitute(f, {"x": R2.var("x")})
    U = Chart("U", ["u"])
    with pytest.raises(ChartMismatch):
        substitute(f, {"x": R2.var("x"), "y": U.var("u")})


def test_exact_divide_examples():
    assert exact_divide(parse_scalar(D, "t^2*y_"), "t") == parse_scalar(D, "t*y_")
    with pytest.raises(NotDivisible) as exc:
        exact_divide(parse_scalar(D, "t + x"), "t")
    assert str(exc.value.term) == "x"
    f = parse_scalar(D, "t*(x + t*y_)^2")
    assert exact_divide(f, "t") == parse_scalar(D, "x^2 + 2*x*t*y_ + t^2*y_^2")


@given(polys(D, degree=3))
def test_exact_divide_round_trip(f):
    assert exact_divide(f * D.var("t"), "t") == f


@given(polys(R3), polys(R3), polys(R3))
def test_ring_axioms(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a + b == b + a
    assert a - a == Poly(R3)


@given(polys(R3, degree=3), polys(R3, degree=3), st.integers(0, 4))
def test_jet_arithmetic_matches_truncation(f, g, k):
    p = (Fraction(1, 2), Fraction(-1, 3), Fraction(2))
    jf, jg = Jet.from_poly(f, p, k), Jet.from_poly(g, p, k)
    assert jf * jg == Jet.from_poly(f * g, p, k)
    assert jf + jg == Jet.from_poly(f + g, p, k)
    assert jf.value() == f.eval_exact(p)


@given(polys(R3, degree=4, max_terms=6),
       st.tuples(*[st.fractions(-3, 3, max_denominator=7)] * 3))
def test_numeric_matches_exact(f, p):
    exact = float(f.eval_exact(p))
    assert abs(f.evaluate(p) - exact) <= 1e-12 * max(1.0, abs(exact))


def test_laurent_variable():
    C = Chart("C", ["x", "y"], invertible={"x"})
    f = parse_scalar(C, "x^-1*y")
    assert f * C.var("x") == C.var("y")
    with pytest.raises(SymbolicError):
        parse_scalar(R2, "x^-1")
