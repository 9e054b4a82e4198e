import numpy as np
import pytest

from normalforms.bialgebroid import (
    ManinTriple,
    MoserPrecondition,
    NotCosymplectic,
    PoissonStructure,
    cosymplectic_check,
    fit_alpha,
    moser_manin,
    poisson_matrix,
    poisson_sharp,
    weinstein_normal_form,
)
from normalforms.symcore import Chart, SymbolicError
from normalforms.tensorcalc import parse_form, parse_multivector

SO3 = Chart("so3", ["x", "y", "z"], transverse=["x"], normal=["y", "z"], invertible=["x"])
LIE_POISSON = "z*Dx^Dy + x*Dy^Dz + y*Dz^Dx"
PLANE = Chart("P", ["x", "y"], transverse=["x"], normal=["y"])
ORIGIN = Chart("P0", ["x", "y"], transverse=[], normal=["x", "y"])


def grid(box, n):
    axes = [np.linspace(a, b, n) for a, b in box]
    return [tuple(p) for p in np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(box), -1).T]


def test_poisson_structure_requires_jacobi():
    PoissonStructure(SO3, parse_multivector(SO3, LIE_POISSON))
    with pytest.raises(SymbolicError):
        PoissonStructure(SO3, parse_multivector(SO3, "y*Dy^Dz + Dx^Dy"))


@pytest.mark.parametrize("point", [(1.0, 0.2, -0.3), (0.5, -0.7, 0.1)])
def test_sharp_from_manin_triple_is_pi(point):
    pi = parse_multivector(SO3, LIE_POISSON)
    T = ManinTriple.poisson(pi)
    assert T.check([point]).passed
    assert np.allclose(poisson_sharp(T, point), poisson_matrix(pi, point), atol=1e-12)


def test_sharp_of_symplectic_plane():
    pi = parse_multivector(PLANE, "Dx^Dy")
    P = poisson_sharp(ManinTriple.poisson(pi), (0.0, 0.0))
    # π♯(dx) = ∂y, π♯(dy) = −∂x
    assert np.allclose(P @ [1, 0], [0, 1])
    assert np.allclose(P @ [0, 1], [-1, 0])


def test_cosymplectic_checks():
    pi = parse_multivector(SO3, LIE_POISSON)
    rep = cosymplectic_check(pi, [(0.5,), (1.0,), (2.0,)])
    assert rep.passed
    assert rep.artifacts["min_abs_determinant"] == pytest.approx(0.25)
    zero = parse_multivector(SO3, "0", degree=2)
    assert not cosymplectic_check(zero, [(1.0,)]).passed


def test_fit_alpha_recovers_euler_like_section():
    pi = parse_multivector(SO3, LIE_POISSON)
    alpha = fit_alpha(pi, [(v,) for v in (0.8, 1.2, 1.6)])
    zero = {"y": 0, "z": 0}
    assert all(not f.restrict(zero) for f in alpha.comps.values())


def test_weinstein_so3():
    pi = parse_multivector(SO3, LIE_POISSON)
    box = [(0.8, 1.6), (-0.3, 0.3), (-0.3, 0.3)]
    rep = weinstein_normal_form(pi, grid(box, 3), grid=[(v,) for v in (0.8, 1.2, 1.6)])
    assert rep.passed, rep.failures()
    assert rep.residual("section_identities").value == 0


def test_weinstein_symplectic_plane_at_origin():
    pi = parse_multivector(ORIGIN, "Dx^Dy")
    alpha = parse_form(ORIGIN, "y*dx - x*dy")
    rep = weinstein_normal_form(pi, grid([(-0.3, 0.3), (-0.3, 0.3)], 3), alpha=alpha)
    assert rep.passed, rep.failures()


def test_weinstein_nonconstant_plane():
    pi = parse_multivector(ORIGIN, "(1 + x^2 + y^2)*Dx^Dy")
    rep = weinstein_normal_form(pi, grid([(-0.3, 0.3), (-0.3, 0.3)], 3), alpha=parse_form(ORIGIN, "y*dx - x*dy"))
    assert rep.passed, rep.failures()


def test_weinstein_rejects_non_cosymplectic():
    C = Chart("C", ["x", "y", "z"], transverse=["x", "y"], normal=["z"])
    pi = parse_multivector(C, "Dx^Dy")
    with pytest.raises(SymbolicError):
        weinstein_normal_form(pi, [(0.1, 0.1, 0.1)], alpha=parse_form(C, "z*dz"))


def test_weinstein_needs_alpha_or_grid():
    with pytest.raises(SymbolicError):
        weinstein_normal_form(parse_multivector(PLANE, "Dx^Dy"), [(0.0, 0.0)])


S_CHART = Chart("R2[s]", ["x", "y", "s"])
R2 = Chart("R2", ["x", "y"])


def test_moser_exact_family():
    pi = parse_multivector(R2, "Dx^Dy")
    nu = parse_form(S_CHART, "-2*s*x*dx^dy", degree=2)
    alpha = parse_form(S_CHART, "x^2*dy", degree=1)
    rep = moser_manin(pi, nu, alpha, grid([(-0.2, 0.2), (-0.2, 0.2)], 3), steps=64)
    assert rep.passed, rep.failures()
    assert rep.artifacts["checkpoints"] == [0.5, 1.0]


def test_moser_trivial_family_is_identity():
    pi = parse_multivector(R2, "Dx^Dy")
    zero2 = parse_form(S_CHART, "0", degree=2)
    zero1 = parse_form(S_CHART, "0", degree=1)
    rep = moser_manin(pi, zero2, zero1, [(0.1, 0.2)], steps=8)
    assert rep.passed
    assert all(r.value < 1e-14 for r in rep.residuals)


def test_moser_preconditions():
    pi = parse_multivector(R2, "Dx^Dy")
    alpha = parse_form(S_CHART, "x^2*dy", degree=1)
    with pytest.raises(MoserPrecondition):
        moser_manin(pi, parse_form(S_CHART, "-3*s*x*dx^dy", degree=2), alpha, [(0.0, 0.0)])
    with pytest.raises(MoserPrecondition):
        moser_manin(pi, parse_form(S_CHART, "(1 - 2*s*x)*dx^dy", degree=2), alpha, [(0.0, 0.0)])
    with pytest.raises(MoserPrecondition):
        moser_manin(pi, parse_form(S_CHART, "-2*s*x*dx^dy", degree=2), parse_form(S_CHART, "x^2*dy + ds"),
                    [(0.0, 0.0)])
