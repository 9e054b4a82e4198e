import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import polys, random_poly
from normalforms.anchored import (
    AnchoredBundle,
    DeformedBundle,
    RankDrop,
    anchored_pullback,
    euler_section,
    splitting_iso,
    transport_section,
    w_section,
)
from normalforms.defspace import DeformationChart
from normalforms.eulerflow import NotEulerLike, euler_like_check, flow_numeric, tubular_embedding
from normalforms.symcore import Chart, Poly, SymbolicError
from normalforms.tensorcalc import VectorField, lie_bracket, parse_vector

C2 = Chart("C2", ["x", "y"], transverse=["x"], normal=["y"])
C3 = Chart("C3", ["x", "y", "z"], transverse=["x"], normal=["y", "z"], invertible={"x"})
SO3_ANCHOR = [["0", "z", "-y"], ["-z", "0", "x"], ["y", "-x", "0"]]
SO3_C = {(2, 0, 1): -1, (0, 1, 2): -1, (1, 2, 0): -1}


def tangent_bundle(chart, scale=1):
    return AnchoredBundle(chart, [[scale * int(i == j) for j in range(chart.dim)] for i in range(chart.dim)],
                          name="TM")


def so3():
    return AnchoredBundle(C3, SO3_ANCHOR, SO3_C, lie=True)


def test_lie_declaration_is_checked():
    with pytest.raises(SymbolicError):
        AnchoredBundle(C3, SO3_ANCHOR, {k: -v for k, v in SO3_C.items()}, lie=True)
    assert so3().jacobi_residual() == 0


def test_pullbacks_of_tangent_bundle():
    E = tangent_bundle(C3)
    iE, K = anchored_pullback(E, "i")
    assert iE.rank == 1 and iE.chart.coords == ("x",)
    assert iE.anchor == [[Poly.constant(iE.chart, 1)]]
    nuE, _ = anchored_pullback(E, "p")
    assert nuE.rank == 3
    V = nuE.chart
    for i in range(3):
        for j in range(3):
            assert nuE.anchor[i][j] == Poly.constant(V, int(i == j))


def test_pullback_zero_anchor_keeps_structure():
    C = Chart("P", ["x"], transverse=["x"], normal=[])
    E = AnchoredBundle(C, [["0", "0"]], {(0, 0, 1): "1"})
    nuE, K = anchored_pullback(E, "p")
    assert nuE.c(0, 0, 1) == Poly.constant(nuE.chart, 1)


def test_pullback_rank_drop():
    E = AnchoredBundle(C2, [["1"], ["0"]])
    with pytest.raises(RankDrop):
        anchored_pullback(E, "i")


def test_so3_restricted_frame_is_tangent_to_n():
    E = so3()
    iE, K = anchored_pullback(E, "i")
    assert len(K) == 1
    for x in (0.5, 1.0, 2.0):
        rho = E.anchor_matrix([x, 0.0, 0.0])
        img = rho @ np.array([float(c) for c in K[0]])
        assert np.allclose(img[1:], 0.0)


def test_euler_sections_of_tangent_bundle():
    grid = [(0.5,), (1.0,), (1.5,)]
    sigma = euler_section(tangent_bundle(C3), grid)
    assert sigma == (Poly(C3), C3.var("y"), C3.var("z"))
    half = euler_section(tangent_bundle(C3, 2), grid)
    assert half == (Poly(C3), C3.parse("1/2*y"), C3.parse("1/2*z"))


def test_so3_euler_section():
    sigma = euler_section(so3(), [(0.8,), (1.2,), (1.6,)])
    assert euler_like_check(so3().anchor_of(sigma))
    assert sigma == (Poly(C3), C3.parse("-x^-1*z"), C3.parse("x^-1*y"))


def test_w_section():
    E = tangent_bundle(C2)
    dc = DeformationChart(C2)
    sigma = (Poly(C2), C2.var("y"))
    w = w_section(E, sigma, dc)
    assert w.vec == parse_vector(dc.defchart, "Dt")
    w2 = w_section(E, (C2.parse("y^2"), C2.parse("y + y^2")), dc)
    assert w2.xi == (dc.defchart.parse("t*y_^2"), dc.defchart.parse("y_ + t*y_^2"))
    with pytest.raises(NotEulerLike):
        w_section(E, (Poly(C2), C2.parse("2*y")), dc)


def test_w_commutes_with_invariant_lifts():
    E = tangent_bundle(C3)
    dc = DeformationChart(C3)
    DE = DeformedBundle(E, dc)
    sigma = (Poly(C3), C3.var("y"), C3.var("z"))
    w = DE.w(sigma)
    for tau in [(C3.var("x"), Poly(C3), Poly(C3)), (Poly(C3), C3.var("z"), -C3.var("y"))]:
        assert E.bracket(sigma, tau) == (Poly(C3),) * 3
        br = DE.bracket(w, DE.lift(tau))
        assert all(not f for f in br.xi) and br.vec.is_zero()
    assert all(not f for f in DE.anchor_defect(w))


@st.composite
def bundles(draw):
    C = Chart("B", ["x", "y"])
    anchor = [[draw(polys(C, 1, 2)) for _ in range(2)] for _ in range(2)]
    structure = {(k, 0, 1): draw(polys(C, 1, 2)) for k in range(2)}
    return AnchoredBundle(C, anchor, structure)


@given(bundles(), st.integers(0, 10 ** 6))
def test_leibniz_rule(E, seed):
    rng = random.Random(seed)
    C = E.chart
    s = tuple(random_poly(rng, C) for _ in range(2))
    t = tuple(random_poly(rng, C) for _ in range(2))
    f = random_poly(rng, C)
    lhs = E.bracket(s, tuple(f * c for c in t))
    af = E.anchor_of(s)(f)
    rhs = tuple(f * a + af * b for a, b in zip(E.bracket(s, t), t))
    assert lhs == rhs


def test_anchor_compatibility_reported_for_flat_bracket():
    C = Chart("B", ["x", "y"])
    E = AnchoredBundle(C, [["1", "y"], ["0", "x"]])
    assert E.anchor_compatibility_residual() > 0


def test_transport_center_section():
    C = Chart("P", ["x"], transverse=["x"], normal=[])
    E = AnchoredBundle(C, [["0", "0", "0"]], {(2, 0, 1): 1, (0, 1, 2): 1, (1, 2, 0): 1})
    z, xi = transport_section(E, (Poly(C),) * 3, np.eye(3), [0.3], 0.7)
    assert np.allclose(xi, np.eye(3), atol=1e-14)


def test_transport_matrix_exponential():
    C = Chart("P", ["x"])
    c = {(2, 0, 1): 1, (0, 1, 2): 1, (1, 2, 0): 1}
    E = AnchoredBundle(C, [["0", "0", "0"]], c)
    sigma = (Poly.constant(C, 0.5), Poly.constant(C, -1), Poly.constant(C, 2))
    M = np.array([[float(f.evaluate([0])) for f in row] for row in E.derivation_matrix(sigma)])
    z, xi = transport_section(E, sigma, np.eye(3), [0.0], 0.8)
    assert np.max(np.abs(xi - expm(0.8 * M))) < 1e-10


def test_transport_tangent_bundle_is_flow_differential():
    E = tangent_bundle(C2)
    X = parse_vector(C2, "(y + y^2)*Dy + y*x*Dx")
    sigma = tuple(X.comps)
    p = np.array([0.2, 0.3])
    s = 0.6
    z, xi = transport_section(E, sigma, np.eye(2), p, s)
    minus = VectorField(C2, [-c for c in X.comps])
    assert np.allclose(z, flow_numeric(minus, p, s).endpoint, atol=1e-9)
    h = 1e-5
    J = np.column_stack([(flow_numeric(minus, p + h * e, s).endpoint - flow_numeric(minus, p - h * e, s).endpoint)
                         / (2 * h) for e in np.eye(2)])
    assert np.max(np.abs(xi - J)) < 1e-6


def test_splitting_identity_for_euler_field():
    E = tangent_bundle(C2)
    iso = splitting_iso(E, (Poly(C2), C2.var("y")), [(0.1, 0.2), (-0.3, 0.4)])
    assert iso.report.passed
    for P in iso.matrices:
        assert np.allclose(P, np.eye(2), atol=1e-12)


def test_splitting_tangent_functor():
    E = tangent_bundle(C2)
    sigma = (Poly(C2), C2.parse("y + y^2"))
    samples = [(0.1, a) for a in (-0.4, -0.1, 0.2, 0.45)]
    iso = splitting_iso(E, sigma, samples)
    assert iso.report.passed, iso.report.failures()
    for v, p, P, T in zip(iso.points, iso.images, iso.matrices, iso.tangents):
        assert abs(p[1] - v[1] / (1 - v[1])) < 1e-9
        assert np.max(np.abs(P - T)) < 1e-8


def test_splitting_so3_grid():
    E = so3()
    sigma = euler_section(E, [(0.8,), (1.2,), (1.6,)])
    g = np.linspace(-0.2, 0.2, 5)
    samples = [(a, b, c) for a in np.linspace(0.8, 1.6, 5) for b in g for c in g]
    iso = splitting_iso(E, sigma, samples)
    assert iso.report.passed, iso.report.failures()
    assert iso.report.residual("bracket_preservation").value < 1e-6
    assert iso.invertible()


def test_non_involutive_anchor_fails_intertwining():
    C = Chart("B", ["x", "y"], transverse=["x"], normal=["y"])
    E = AnchoredBundle(C, [["1", "x"], ["0", "1"]])
    assert E.anchor_compatibility_residual() > 0
    iso = splitting_iso(E, (-C.parse("y^2"), C.var("y")), [(0.1, 0.2)])
    assert not iso.report.residual("anchor_intertwining").passed


def test_bracket_check_refused_without_jacobi():
    # involutive anchor, fiber bracket violating Jacobi
    C = Chart("B", ["x", "y"], transverse=["x"], normal=["y"])
    E = AnchoredBundle(C, [["1", "0", "0", "0", "0"], ["0", "1", "0", "0", "0"]],
                       {(2, 2, 3): 1, (3, 3, 4): 1, (4, 2, 4): 1})
    assert E.anchor_compatibility_residual() == 0 and E.jacobi_residual() > 0
    sigma = (0, C.var("y"), 0, 0, 0)
    iso = splitting_iso(E, sigma, [(0.1, 0.2)])
    assert "bracket_preservation" in iso.report.skipped
    assert iso.report.status == "partial"
    with pytest.raises(SymbolicError):
        splitting_iso(E, sigma, [(0.1, 0.2)], check_brackets=True)
