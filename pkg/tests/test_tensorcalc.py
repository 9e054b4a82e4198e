import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import R2, R3, R4, SUB3, polys
from normalforms.symcore import Chart, ChartMismatch, Poly, SymbolicError
from normalforms.tensorcalc import (
    DiffForm,
    MultiVector,
    PolyMap,
    VectorField,
    euler_field,
    exterior_derivative,
    interior_product,
    lie_bracket,
    lie_derivative,
    parse_form,
    parse_multivector,
    parse_vector,
    pullback,
    pushforward_pointwise,
    schouten_bracket,
)


@st.composite
def vectors(draw, chart, degree=2):
    return VectorField(chart, [draw(polys(chart, degree)) for _ in chart.coords])


@st.composite
def forms(draw, chart, k, degree=2):
    comps = {}
    for idx in itertools.combinations(range(chart.dim), k):
        comps[idx] = draw(polys(chart, degree, max_terms=2))
    return DiffForm(chart, k, comps)


@st.composite
def bivectors(draw, chart, degree=2):
    comps = {}
    for idx in itertools.combinations(range(chart.dim), 2):
        comps[idx] = draw(polys(chart, degree, max_terms=2))
    return MultiVector(chart, 2, comps)


def test_bracket_examples():
    assert lie_bracket(parse_vector(R2, "Dx"), parse_vector(R2, "x*Dy")) == parse_vector(R2, "Dy")
    C = Chart("Y", ["y1", "y2"], transverse=[], normal=["y1", "y2"])
    E = euler_field(C)
    Y = parse_vector(C, "y1^2*Dy2")
    assert lie_bracket(E, Y) == Y


def test_bracket_chart_mismatch():
    with pytest.raises(ChartMismatch):
        lie_bracket(parse_vector(R2, "Dx"), parse_vector(R3, "Dx"))


@given(vectors(R3), vectors(R3), vectors(R3))
def test_jacobi_vector_fields(X, Y, Z):
    total = (lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X))
             + lie_bracket(Z, lie_bracket(X, Y)))
    assert total.is_zero()


def test_d_examples():
    assert exterior_derivative(parse_form(R2, "x*dy")) == parse_form(R2, "dx^dy")
    assert exterior_derivative(parse_form(R2, "y^2*dx")) == parse_form(R2, "-2*y*dx^dy")


@given(polys(R4, degree=4, max_terms=6))
def test_d_squared_on_functions(f):
    assert exterior_derivative(exterior_derivative(DiffForm.from_scalar(f))).is_zero()


@given(forms(R4, 1), forms(R4, 2))
def test_d_squared_on_forms(a, b):
    assert a.d().d().is_zero()
    assert b.d().d().is_zero()


def test_interior_examples():
    assert interior_product(parse_vector(R3, "Dy"), parse_form(R3, "dx^dy^dz")) == parse_form(R3, "-dx^dz")
    assert interior_product(parse_vector(R3, "Dx"), parse_form(R3, "dx")).scalar() == Poly.constant(R3, 1)
    with pytest.raises(SymbolicError):
        interior_product(parse_vector(R3, "Dx"), DiffForm.from_scalar(R3.var("x")))


def _contract_oracle(X, alpha):
    # multilinear expansion: (ι_X α)(e_J) = Σ_i X^i α(e_i, e_J)
    k = alpha.degree
    out = {}
    for J in itertools.combinations(range(alpha.chart.dim), k - 1):
        acc = Poly(alpha.chart)
        for i in range(alpha.chart.dim):
            idx = (i,) + J
            if len(set(idx)) < k:
                continue
            perm = sorted(range(k), key=lambda a: idx[a])
            inv = sum(1 for a in range(k) for b in range(a + 1, k) if perm[a] > perm[b])
            acc = acc + X.comps[i] * alpha.component(tuple(sorted(idx))) * (-1) ** inv
        out[J] = acc
    return DiffForm(alpha.chart, k - 1, out)


@given(vectors(R4), forms(R4, 2), forms(R4, 3))
def test_interior_product_oracle(X, a2, a3):
    assert interior_product(X, a2) == _contract_oracle(X, a2)
    assert interior_product(X, a3) == _contract_oracle(X, a3)
    assert interior_product(X, interior_product(X, a3)).is_zero()


def test_lie_derivative_examples():
    assert lie_derivative(parse_vector(R2, "Dx"), parse_form(R2, "x*dy")) == parse_form(R2, "dy")
    C = Chart("C", ["x", "y1", "y2"], transverse=["x"], normal=["y1", "y2"])
    E = VectorField(C, [Poly(C), C.var("y1"), C.var("y2")])
    f = C.parse("x*y1^2*y2 - 3*y2^3")
    assert lie_derivative(E, f) == 3 * f


@given(vectors(R3), forms(R3, 1), forms(R3, 2))
def test_cartan_and_commutation(X, a, b):
    for form in (a, b):
        cartan = interior_product(X, form.d()) + interior_product(X, form).d() if form.degree else None
        assert lie_derivative(X, form) == cartan
        assert lie_derivative(X, form.d()) == lie_derivative(X, form).d()


@given(vectors(R3), vectors(R3), forms(R3, 1))
def test_lie_derivative_of_bracket(X, Y, a):
    lhs = lie_derivative(lie_bracket(X, Y), a)
    rhs = lie_derivative(X, lie_derivative(Y, a)) - lie_derivative(Y, lie_derivative(X, a))
    assert lhs == rhs


@given(polys(SUB3, degree=3, max_terms=6), st.integers(0, 2))
def test_euler_weight_counting(f, kind):
    # L_E acts by (normal degree) - (#normal ∂ indices) + (#normal d indices)
    E = euler_field(SUB3)
    parts = {k: f.homogeneous_part(SUB3.normal, k) for k in range(4)}
    for k, h in parts.items():
        if kind == 0:
            T, w = h, k
            assert lie_derivative(E, T) == T * w
        elif kind == 1:
            T = DiffForm(SUB3, 2, {(0, 1): h})
            assert lie_derivative(E, T) == T * (k + 1)
        else:
            T = MultiVector(SUB3, 2, {(1, 2): h})
            assert lie_derivative(E, T) == T * (k - 2)


def test_schouten_examples():
    P = parse_multivector(R2, "Dx^Dy")
    assert schouten_bracket(P, P).is_zero()
    pi = parse_multivector(R3, "z*Dx^Dy + x*Dy^Dz + y*Dz^Dx")
    assert schouten_bracket(pi, pi).is_zero()
    X = parse_vector(R3, "x*Dy + z^2*Dx")
    f = R3.parse("x*y*z")
    assert schouten_bracket(X.as_multivector(), MultiVector.from_scalar(f)).component(()) == X(f)


def _jacobiator(pi, i, j, k):
    C = pi.chart
    P = [[pi.component((a, b)) if a != b else Poly(C) for b in range(C.dim)] for a in range(C.dim)]

    def pb(f, g):
        acc = Poly(C)
        for a in range(C.dim):
            for b in range(C.dim):
                if P[a][b]:
                    acc = acc + P[a][b] * f.diff(C.coords[a]) * g.diff(C.coords[b])
        return acc

    xi, xj, xk = (C.var(C.coords[m]) for m in (i, j, k))
    return pb(pb(xi, xj), xk) + pb(pb(xj, xk), xi) + pb(pb(xk, xi), xj)


@given(bivectors(R4))
def test_schouten_square_matches_jacobiator(pi):
    # [π,π] components equal -2 × the Jacobiator of the induced bracket
    S = schouten_bracket(pi, pi)
    for i, j, k in itertools.combinations(range(4), 3):
        assert S.component((i, j, k)) == _jacobiator(pi, i, j, k) * -2


@given(vectors(R3), vectors(R3))
def test_schouten_extends_lie_bracket(X, Y):
    assert schouten_bracket(X.as_multivector(), Y.as_multivector()).to_vector() == lie_bracket(X, Y)


@given(vectors(R3, degree=1), bivectors(R3, degree=1), bivectors(R3, degree=1))
def test_schouten_graded_jacobi(X, P, Q):
    x = X.as_multivector()
    # [X,[P,Q]] = [[X,P],Q] + [P,[X,Q]] for a degree-1 element
    lhs = schouten_bracket(x, schouten_bracket(P, Q))
    rhs = schouten_bracket(schouten_bracket(x, P), Q) + schouten_bracket(P, schouten_bracket(x, Q))
    assert lhs == rhs
    assert schouten_bracket(x, P) == lie_derivative(X, P)


def test_pullback_examples():
    V = Chart("V", ["x", "y_"])
    phi = PolyMap(V, R2, [V.parse("x + 1/2*y_^2"), V.var("y_")])
    assert pullback(phi, parse_form(R2, "dx")) == parse_form(V, "dx + y_*dy_")
    a = parse_form(R2, "x*y*dx + y^2*dy")
    assert pullback(PolyMap.identity(R2), a) == a


@given(forms(R2, 1), forms(R2, 1))
def test_pullback_morphism(a, b):
    V = Chart("V", ["u", "v"])
    phi = PolyMap(V, R2, [V.parse("u + v^2"), V.parse("u*v - v")])
    assert pullback(phi, a.d()) == pullback(phi, a).d()
    assert pullback(phi, a.wedge(b)) == pullback(phi, a).wedge(pullback(phi, b))


def test_pushforward_is_jacobian_action():
    V = Chart("V", ["u", "v"])
    phi = PolyMap(V, R3, [V.parse("u"), V.parse("v^2"), V.parse("u*v")])
    X = parse_vector(V, "Du + u*Dv")
    p = (0.5, -1.5)
    J = np.array([[1, 0], [0, 2 * p[1]], [p[1], p[0]]])
    assert np.allclose(pushforward_pointwise(phi, p, X), J @ X.evaluate(p))
