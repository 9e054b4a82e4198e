import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from normalforms.symcore import Chart, Poly

settings.register_profile(
    "repo", derandomize=True, deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")

R2 = Chart("R2", ["x", "y"])
R3 = Chart("R3", ["x", "y", "z"])
R4 = Chart("R4", ["w", "x", "y", "z"])
SUB2 = Chart("S2", ["x", "y"], transverse=["x"], normal=["y"])
SUB3 = Chart("S3", ["x", "y", "z"], transverse=["x"], normal=["y", "z"])


def exponents(dim, degree):
    return [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]


@st.composite
def polys(draw, chart, degree=2, max_terms=4):
    pool = exponents(chart.dim, degree)
    n = draw(st.integers(0, max_terms))
    terms = {}
    for _ in range(n):
        e = draw(st.sampled_from(pool))
        num = draw(st.integers(-5, 5))
        den = draw(st.integers(1, 3))
        terms[e] = terms.get(e, 0) + Fraction(num, den)
    return Poly(chart, terms)


def random_poly(rng: random.Random, chart, degree=2, terms=3):
    pool = exponents(chart.dim, degree)
    out = {}
    for _ in range(terms):
        e = rng.choice(pool)
        out[e] = out.get(e, 0) + Fraction(rng.randint(-4, 4), rng.randint(1, 3))
    return Poly(chart, out)


@pytest.fixture
def rng():
    return random.Random(20240611)


def random_euler_like(rng: random.Random, chart, degree=3):
    """X = Σ a_i ∂x_i + Σ (y_j + b_j) ∂y_j with a_i ∈ I_N and b_j ∈ I_N^2."""
    from normalforms.tensorcalc import VectorField

    normal = [chart.index(n) for n in chart.normal]
    comps = []
    for c in chart.coords:
        p = random_poly(rng, chart, degree, terms=3)
        need = 2 if c in chart.normal else 1
        p = Poly(chart, {e: k for e, k in p.terms.items() if sum(e[i] for i in normal) >= need})
        if c in chart.normal:
            p = p + chart.var(c)
        comps.append(p)
    return VectorField(chart, comps)


def random_vector(rng: random.Random, chart, degree=2, tangent=False):
    from normalforms.tensorcalc import VectorField

    normal = [chart.index(n) for n in chart.normal]
    comps = []
    for c in chart.coords:
        p = random_poly(rng, chart, degree, terms=3)
        if tangent and c in chart.normal:
            p = Poly(chart, {e: k for e, k in p.terms.items() if sum(e[i] for i in normal) >= 1})
        comps.append(p)
    return VectorField(chart, comps)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
