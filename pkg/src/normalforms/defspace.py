"""The deformation space of a submanifold chart in (x, ỹ, t) coordinates.

For a chart with transverse block x and normal block y, the deformation
chart has coordinates (x, ỹ, t) with κ(x, ỹ, t) = (x, tỹ). The zero fiber
t = 0 is the normal bundle chart (x, ỹ); every other fiber t = a is a copy
of the base via y = aỹ.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .symcore import Chart, NotDivisible, Poly, SymbolicError, as_fraction
from .tensorcalc import DiffForm, PolyMap, VectorField, euler_field, pullback

__all__ = [
    "NotVanishingOnN",
    "NotTangentToN",
    "DeformationChart",
    "FiberRestriction",
    "Restricted",
    "lift_scalar",
    "lift_vector_hat",
    "lift_vector_tangent",
    "lift_form",
    "canonical_fields",
    "restrict_fiber",
]


class NotVanishingOnN(SymbolicError):
    pass


class NotTangentToN(SymbolicError):
    pass


def _fresh(name, taken):
    while name in taken:
        name += "_"
    return name


class DeformationChart:
    """Coordinates (x, ỹ, t) on the deformation space of a submanifold chart.

    The deformation chart lists the base coordinates in their original order
    with each normal variable y replaced by its rescaled partner (named
    ``y_``), followed by t. The normal-bundle chart drops t.
    """

    def __init__(self, base: Chart, tilde_suffix="_", t_name="t"):
        if not base.is_submanifold_chart:
            raise SymbolicError(f"chart {base.name!r} has no transverse/normal blocks")
        self.base = base
        taken = set(base.coords)
        tilde = {}
        for y in base.normal:
            tilde[y] = _fresh(y + tilde_suffix, taken)
            taken.add(tilde[y])
        self.tilde = tilde
        self.untilde = {v: k for k, v in tilde.items()}
        self.t = _fresh(t_name, taken)
        coords = [tilde.get(c, c) for c in base.coords]
        self.nuchart = Chart(
            f"nu({base.name})",
            coords,
            transverse=base.transverse,
            normal=[tilde[y] for y in base.normal],
            invertible=base.invertible,
        )
        self.defchart = Chart(f"D({base.name})", coords + [self.t], invertible=base.invertible)
        self.t_index = base.dim
        self.normal_indices = base.normal_indices()
        self.transverse_indices = base.transverse_indices()

    def __repr__(self):
        return f"DeformationChart({self.base.name}: {', '.join(self.defchart.coords)})"

    # coordinate helpers
    def tvar(self) -> Poly:
        return self.defchart.var(self.t)

    def kappa(self) -> PolyMap:
        """κ(x, ỹ, t) = (x, tỹ)."""
        D = self.defchart
        t = self.tvar()
        comps = []
        for c in self.base.coords:
            comps.append(D.var(self.tilde[c]) * t if c in self.tilde else D.var(c))
        return PolyMap(D, self.base, comps)

    def j_zero(self) -> PolyMap:
        """Inclusion of the normal bundle chart as the zero fiber."""
        V = self.nuchart
        return PolyMap(V, self.defchart, list(V.vars()) + [Poly(V)])

    def j_fiber(self, a) -> PolyMap:
        """Inclusion of the base as the fiber t = a (a ≠ 0): y ↦ ỹ = y/a."""
        a = as_fraction(a)
        if not a:
            return self.j_zero()
        B = self.base
        comps = [B.var(c) * (1 / a) if c in self.tilde else B.var(c) for c in B.coords]
        return PolyMap(B, self.defchart, comps + [Poly.constant(B, a)])

    def base_to_def(self, f: Poly) -> Poly:
        """κ*f as a polynomial on the deformation chart."""
        return self.kappa().pull_scalar(f)

    def nu_from_def(self, f: Poly) -> Poly:
        return self.j_zero().pull_scalar(f)

    def weights(self, chart=None):
        """Normal-degree weights: 1 on the rescaled normal variables."""
        chart = chart or self.nuchart
        return {c: int(c in self.untilde) for c in chart.coords}


@dataclass(frozen=True)
class Restricted:
    tensor: object
    t: Fraction
    dropped: bool


class FiberRestriction:
    """Restriction to the fiber t = t0, realized by substitution along j_t0."""

    def __init__(self, dc: DeformationChart, t0):
        self.dc = dc
        self.t = as_fraction(t0)
        self.map = dc.j_fiber(self.t)

    @property
    def target(self) -> Chart:
        return self.dc.nuchart if not self.t else self.dc.base

    def apply(self, T) -> Restricted:
        dc = self.dc
        jm = self.map
        if isinstance(T, Poly):
            return Restricted(jm.pull_scalar(T), self.t, False)
        if isinstance(T, VectorField):
            comps = []
            dropped = bool(jm.pull_scalar(T.comps[dc.t_index]))
            for i, c in enumerate(T.comps[: dc.t_index]):
                v = jm.pull_scalar(c)
                if self.t and dc.defchart.coords[i] in dc.untilde:
                    v = v * self.t
                comps.append(v)
            return Restricted(VectorField(self.target, comps), self.t, dropped)
        if isinstance(T, DiffForm):
            dropped = any(dc.t_index in idx and jm.pull_scalar(f) for idx, f in T.comps.items())
            return Restricted(pullback(jm, T), self.t, dropped)
        raise TypeError(f"cannot restrict {type(T).__name__}")


def restrict_fiber(T, t0, dc: DeformationChart) -> Restricted:
    return FiberRestriction(dc, t0).apply(T)


def lift_scalar(f: Poly, dc: DeformationChart) -> Poly:
    """f̃ = f(x, tỹ)/t for f vanishing along N."""
    on_n = f.restrict({y: 0 for y in dc.base.normal})
    if on_n:
        raise NotVanishingOnN(f"{f} does not vanish along N (restriction {on_n})")
    return dc.base_to_def(f).exact_divide(dc.t)


def lift_vector_hat(Y: VectorField, dc: DeformationChart) -> VectorField:
    """Ŷ = Σ t c_i(x,tỹ) ∂x_i + Σ d_j(x,tỹ) ∂ỹ_j."""
    kap = dc.kappa()
    t = dc.tvar()
    comps = []
    for name, c in zip(dc.base.coords, Y.comps):
        v = kap.pull_scalar(c)
        comps.append(v if name in dc.tilde else v * t)
    comps.append(Poly(dc.defchart))
    return VectorField(dc.defchart, comps)


def lift_vector_tangent(Y: VectorField, dc: DeformationChart) -> VectorField:
    """D(Y) = Ŷ/t for Y tangent to N."""
    hat = lift_vector_hat(Y, dc)
    try:
        return VectorField(dc.defchart, [c.exact_divide(dc.t) if c else c for c in hat.comps])
    except NotDivisible as exc:
        raise NotTangentToN(f"{Y} is not tangent to N: {exc}") from None


def lift_form(alpha: DiffForm, dc: DeformationChart) -> DiffForm:
    """D(α) = κ*α / t, raising NotDivisible when α does not vanish along N."""
    pulled = pullback(dc.kappa(), alpha)
    return DiffForm(dc.defchart, alpha.degree, {k: v.exact_divide(dc.t) for k, v in pulled.comps.items()})


def canonical_fields(dc: DeformationChart):
    """(Θ on the deformation chart, E on the normal bundle chart)."""
    D = dc.defchart
    comps = [Poly(D)] * D.dim
    comps = list(comps)
    for name in dc.untilde:
        comps[D.index(name)] = -D.var(name)
    comps[dc.t_index] = dc.tvar()
    theta = VectorField(D, comps)
    return theta, euler_field(dc.nuchart)
