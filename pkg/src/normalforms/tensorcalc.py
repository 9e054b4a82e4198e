"""Coordinate tensor calculus on a chart.

Forms and multivectors keep components only on strictly increasing index
tuples; every sign is produced by :func:`canon`.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational

import numpy as np

from .symcore import (
    Chart,
    ChartMismatch,
    Poly,
    SymbolicError,
    _Parser,
    as_fraction,
    substitute,
)

__all__ = [
    "canon",
    "VectorField",
    "DiffForm",
    "MultiVector",
    "PolyMap",
    "lie_bracket",
    "exterior_derivative",
    "interior_product",
    "lie_derivative",
    "schouten_bracket",
    "pullback",
    "pushforward_pointwise",
    "sharp",
    "parse_form",
    "parse_multivector",
    "parse_vector",
    "euler_field",
]


def canon(idx):
    """Sort an index tuple, returning (sign, sorted tuple); sign 0 on repeats."""
    idx = list(idx)
    sign = 1
    n = len(idx)
    for i in range(n):
        for j in range(n - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
            elif idx[j] == idx[j + 1]:
                return 0, None
    for j in range(n - 1):
        if idx[j] == idx[j + 1]:
            return 0, None
    return sign, tuple(idx)


def _check(a, b):
    if a.chart != b.chart:
        raise ChartMismatch(f"charts {a.chart.name!r} and {b.chart.name!r} differ")


def _scalar(chart, f):
    if isinstance(f, Poly):
        if f.chart != chart:
            raise ChartMismatch("scalar lives on another chart")
        return f
    return Poly.constant(chart, f)


class _Alternating:
    """Common storage for forms and multivectors."""

    __slots__ = ("chart", "degree", "comps")
    symbol = "?"

    def __init__(self, chart: Chart, degree: int, comps=None):
        self.chart = chart
        self.degree = degree
        clean = {}
        for idx, f in (comps or {}).items():
            sign, key = canon(idx)
            if sign == 0:
                continue
            if len(key) != degree:
                raise SymbolicError("component index length does not match degree")
            f = _scalar(chart, f)
            v = clean.get(key, Poly(chart)) + (f if sign > 0 else -f)
            if v:
                clean[key] = v
            else:
                clean.pop(key, None)
        self.comps = clean

    @classmethod
    def _raw(cls, chart, degree, comps):
        obj = cls.__new__(cls)
        obj.chart = chart
        obj.degree = degree
        obj.comps = {k: v for k, v in comps.items() if v}
        return obj

    @classmethod
    def zero(cls, chart, degree):
        return cls._raw(chart, degree, {})

    def component(self, idx) -> Poly:
        sign, key = canon(idx)
        if sign == 0:
            return Poly(self.chart)
        v = self.comps.get(key, Poly(self.chart))
        return v if sign > 0 else -v

    def is_zero(self):
        return not self.comps

    def __bool__(self):
        return bool(self.comps)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)) and other == 0:
            return not self.comps
        if type(other) is not type(self):
            return NotImplemented
        return self.chart == other.chart and self.degree == other.degree and self.comps == other.comps

    def __hash__(self):
        return hash((type(self).__name__, self.degree, frozenset(self.comps.items())))

    def __add__(self, other):
        if isinstance(other, (int, Fraction)) and other == 0:
            return self
        if type(other) is not type(self):
            return NotImplemented
        _check(self, other)
        if other.degree != self.degree and self.comps and other.comps:
            raise SymbolicError("cannot add tensors of different degree")
        out = dict(self.comps)
        for k, v in other.comps.items():
            out[k] = out.get(k, Poly(self.chart)) + v
        return type(self)._raw(self.chart, max(self.degree, other.degree) if not self.comps or not other.comps else self.degree, out)

    __radd__ = __add__

    def __neg__(self):
        return type(self)._raw(self.chart, self.degree, {k: -v for k, v in self.comps.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f):
        f = _scalar(self.chart, f)
        return type(self)._raw(self.chart, self.degree, {k: v * f for k, v in self.comps.items()})

    def __mul__(self, f):
        if isinstance(f, (Poly, int, Fraction, Rational)):
            return self.scale(f)
        if type(f) is type(self):
            return self.wedge(f)
        return NotImplemented

    def __rmul__(self, f):
        if isinstance(f, (Poly, int, Fraction, Rational)):
            return self.scale(f)
        return NotImplemented

    def wedge(self, other):
        if type(other) is not type(self):
            raise TypeError("wedge needs tensors of the same kind")
        _check(self, other)
        out = {}
        for i, f in self.comps.items():
            for j, g in other.comps.items():
                sign, key = canon(i + j)
                if sign == 0:
                    continue
                v = f * g
                out[key] = out.get(key, Poly(self.chart)) + (v if sign > 0 else -v)
        return type(self)._raw(self.chart, self.degree + other.degree, out)

    def map_coeffs(self, fn, chart=None):
        chart = chart or self.chart
        return type(self)._raw(chart, self.degree, {k: fn(v) for k, v in self.comps.items()})

    def evaluate(self, point):
        """Dense antisymmetric numpy array of the components at ``point``."""
        n = self.chart.dim
        arr = np.zeros((n,) * self.degree)
        if self.degree == 0:
            return float(self.comps.get((), Poly(self.chart)).evaluate(point))
        import itertools

        for key, f in self.comps.items():
            v = f.evaluate(point)
            for perm in itertools.permutations(range(self.degree)):
                idx = tuple(key[p] for p in perm)
                sign, _ = canon(idx)
                arr[idx] = sign * v
        return arr

    def __str__(self):
        if not self.comps:
            return "0"
        parts = []
        for key in sorted(self.comps):
            f = self.comps[key]
            basis = "^".join(self.symbol + self.chart.coords[i] for i in key)
            s = str(f)
            if not basis:
                parts.append(s)
                continue
            if len(f.terms) > 1:
                s = f"({s})"
            if s == "1":
                parts.append(basis)
            elif s == "-1":
                parts.append("-" + basis)
            else:
                parts.append(f"{s}*{basis}")
        out = parts[0]
        for p in parts[1:]:
            out += " - " + p[1:] if p.startswith("-") else " + " + p
        return out

    def __repr__(self):
        return f"{type(self).__name__}({self.chart.name}: {self})"


class DiffForm(_Alternating):
    """Differential form Σ f_I dx^I with increasing multi-indices I."""

    __slots__ = ()
    symbol = "d"

    @classmethod
    def from_scalar(cls, f: Poly):
        return cls._raw(f.chart, 0, {(): f})

    @classmethod
    def from_components(cls, chart, values):
        """1-form from a list of coefficients (one per coordinate)."""
        return cls(chart, 1, {(i,): _scalar(chart, v) for i, v in enumerate(values)})

    @classmethod
    def basis(cls, chart, *names):
        idx = tuple(chart.index(n) if isinstance(n, str) else n for n in names)
        return cls(chart, len(idx), {idx: Poly.constant(chart, 1)})

    def scalar(self) -> Poly:
        if self.degree != 0:
            raise SymbolicError("not a 0-form")
        return self.comps.get((), Poly(self.chart))

    def coefficients(self):
        if self.degree != 1:
            raise SymbolicError("not a 1-form")
        return tuple(self.component((i,)) for i in range(self.chart.dim))

    def d(self):
        return exterior_derivative(self)

    def is_closed(self):
        return exterior_derivative(self).is_zero()


class MultiVector(_Alternating):
    """Multivector field Σ f^I ∂_I with increasing multi-indices I."""

    __slots__ = ()
    symbol = "D"

    @classmethod
    def from_vector(cls, X: "VectorField"):
        return cls(X.chart, 1, {(i,): c for i, c in enumerate(X.comps)})

    @classmethod
    def from_scalar(cls, f: Poly):
        return cls._raw(f.chart, 0, {(): f})

    @classmethod
    def basis(cls, chart, *names):
        idx = tuple(chart.index(n) if isinstance(n, str) else n for n in names)
        return cls(chart, len(idx), {idx: Poly.constant(chart, 1)})

    def to_vector(self) -> "VectorField":
        if self.degree != 1:
            raise SymbolicError("not a vector field")
        return VectorField(self.chart, [self.component((i,)) for i in range(self.chart.dim)])


class VectorField:
    """Vector field with one polynomial component per chart variable."""

    __slots__ = ("chart", "comps")

    def __init__(self, chart: Chart, comps):
        comps = tuple(_scalar(chart, c) for c in comps)
        if len(comps) != chart.dim:
            raise SymbolicError("vector field needs one component per coordinate")
        self.chart = chart
        self.comps = comps

    @classmethod
    def zero(cls, chart):
        return cls(chart, [0] * chart.dim)

    @classmethod
    def coordinate(cls, chart, name):
        i = chart.index(name)
        return cls(chart, [int(j == i) for j in range(chart.dim)])

    def __getitem__(self, name):
        return self.comps[self.chart.index(name) if isinstance(name, str) else name]

    def __call__(self, f: Poly) -> Poly:
        """Directional derivative X(f)."""
        if f.chart != self.chart:
            raise ChartMismatch("function on another chart")
        out = Poly(self.chart)
        for i, c in enumerate(self.comps):
            if c:
                out = out + c * f.diff(i)
        return out

    def __add__(self, other):
        if isinstance(other, (int, Fraction)) and other == 0:
            return self
        _check(self, other)
        return VectorField(self.chart, [a + b for a, b in zip(self.comps, other.comps)])

    __radd__ = __add__

    def __neg__(self):
        return VectorField(self.chart, [-a for a in self.comps])

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f):
        f = _scalar(self.chart, f)
        return VectorField(self.chart, [a * f for a in self.comps])

    def __mul__(self, f):
        if isinstance(f, (Poly, int, Fraction, Rational)):
            return self.scale(f)
        return NotImplemented

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)) and other == 0:
            return self.is_zero()
        if not isinstance(other, VectorField):
            return NotImplemented
        return self.chart == other.chart and self.comps == other.comps

    def __hash__(self):
        return hash(self.comps)

    def is_zero(self):
        return not any(self.comps)

    def map_coeffs(self, fn, chart=None):
        return VectorField(chart or self.chart, [fn(c) for c in self.comps])

    def evaluate(self, point):
        return np.array([c.evaluate(point) for c in self.comps])

    def jacobian(self):
        """Matrix of polynomials J[k][l] = ∂X^k/∂x_l."""
        return [[c.diff(l) for l in range(self.chart.dim)] for c in self.comps]

    def as_multivector(self):
        return MultiVector.from_vector(self)

    def __str__(self):
        return str(MultiVector.from_vector(self))

    def __repr__(self):
        return f"VectorField({self.chart.name}: {self})"


def euler_field(chart: Chart) -> VectorField:
    """E = Σ y_j ∂y_j over the normal block of a submanifold chart."""
    comps = [Poly(chart)] * chart.dim
    comps = list(comps)
    for n in chart.normal:
        comps[chart.index(n)] = chart.var(n)
    return VectorField(chart, comps)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    _check(X, Y)
    return VectorField(X.chart, [X(b) - Y(a) for a, b in zip(X.comps, Y.comps)])


def exterior_derivative(alpha: DiffForm) -> DiffForm:
    chart = alpha.chart
    out = {}
    for idx, f in alpha.comps.items():
        for j in range(chart.dim):
            df = f.diff(j)
            if not df:
                continue
            sign, key = canon((j,) + idx)
            if sign == 0:
                continue
            out[key] = out.get(key, Poly(chart)) + (df if sign > 0 else -df)
    return DiffForm._raw(chart, alpha.degree + 1, out)


def interior_product(X: VectorField, alpha: DiffForm) -> DiffForm:
    _check(X, alpha)
    if alpha.degree == 0:
        raise SymbolicError("interior product of a 0-form is undefined")
    chart = alpha.chart
    out = {}
    for idx, f in alpha.comps.items():
        for m, i in enumerate(idx):
            c = X.comps[i]
            if not c:
                continue
            rest = idx[:m] + idx[m + 1:]
            v = c * f
            if m % 2:
                v = -v
            out[rest] = out.get(rest, Poly(chart)) + v
    return DiffForm._raw(chart, alpha.degree - 1, out)


def _contract_vector(X, alpha):
    """ι_X α with ι_X of a 0-form taken as zero (Cartan formula convention)."""
    if alpha.degree == 0:
        return DiffForm.zero(alpha.chart, -1)
    return interior_product(X, alpha)


def schouten_bracket(P: MultiVector, Q: MultiVector) -> MultiVector:
    """Schouten bracket via the derivation rule on wedge factors.

    For P = f ∂_I, Q = g ∂_J with constant coordinate multivectors ∂_I, ∂_J:
    [P, Q] = f [∂_I, g] ∧ ∂_J − (−1)^{(p−1)(q−1)} g [∂_J, f] ∧ ∂_I, where
    [∂_{i1}∧…∧∂_{ip}, h] = Σ_k (−1)^{p−k} ∂_{ik}(h) ∂_{I∖ik}.
    """
    _check(P, Q)
    chart = P.chart
    p, q = P.degree, Q.degree
    out = {}

    def add(key_parts, coeff):
        sign, key = canon(key_parts)
        if sign == 0 or not coeff:
            return
        out[key] = out.get(key, Poly(chart)) + (coeff if sign > 0 else -coeff)

    swap = -1 if ((p - 1) * (q - 1)) % 2 == 0 else 1
    for I, f in P.comps.items():
        for J, g in Q.comps.items():
            for k, i in enumerate(I):
                dg = g.diff(i)
                if dg:
                    s = 1 if (p - 1 - k) % 2 == 0 else -1
                    add(I[:k] + I[k + 1:] + J, f * dg * s)
            for k, j in enumerate(J):
                df = f.diff(j)
                if df:
                    s = 1 if (q - 1 - k) % 2 == 0 else -1
                    add(J[:k] + J[k + 1:] + I, g * df * (s * swap))
    return MultiVector._raw(chart, p + q - 1, out)


def lie_derivative(X: VectorField, T):
    if isinstance(T, Poly):
        return X(T)
    _check(X, T)
    if isinstance(T, DiffForm):
        if T.degree == 0:
            return DiffForm.from_scalar(X(T.scalar()))
        return interior_product(X, exterior_derivative(T)) + exterior_derivative(interior_product(X, T))
    if isinstance(T, MultiVector):
        return schouten_bracket(MultiVector.from_vector(X), T)
    if isinstance(T, VectorField):
        return lie_bracket(X, T)
    raise TypeError(f"cannot take Lie derivative of {type(T).__name__}")


def sharp(pi: MultiVector, alpha: DiffForm) -> VectorField:
    """π♯(α) = π(α, ·), i.e. (π♯α)^j = Σ_i α_i π^{ij}."""
    if pi.degree != 2 or alpha.degree != 1:
        raise SymbolicError("sharp needs a bivector and a 1-form")
    _check(pi, alpha)
    n = pi.chart.dim
    comps = []
    for j in range(n):
        c = Poly(pi.chart)
        for i in range(n):
            a = alpha.component((i,))
            if a:
                c = c + a * pi.component((i, j))
        comps.append(c)
    return VectorField(pi.chart, comps)


class PolyMap:
    """Polynomial map between charts: one source polynomial per target variable."""

    __slots__ = ("source", "target", "comps", "order")

    def __init__(self, source: Chart, target: Chart, comps, order=None):
        comps = tuple(_scalar(source, c) for c in comps)
        if len(comps) != target.dim:
            raise SymbolicError("map needs one component per target variable")
        self.source = source
        self.target = target
        self.comps = comps
        self.order = order

    @classmethod
    def identity(cls, chart):
        return cls(chart, chart, chart.vars())

    def assignment(self):
        return dict(zip(self.target.coords, self.comps))

    def pull_scalar(self, f: Poly, trunc=None) -> Poly:
        if f.chart != self.target:
            raise ChartMismatch("function does not live on the map's target chart")
        return substitute(f, self.assignment(), target=self.source, trunc=trunc)

    def compose(self, other: "PolyMap") -> "PolyMap":
        """self ∘ other."""
        if other.target != self.source:
            raise ChartMismatch("maps do not compose")
        return PolyMap(other.source, self.target, [other.pull_scalar(c) for c in self.comps])

    def jacobian(self):
        return [[c.diff(l) for l in range(self.source.dim)] for c in self.comps]

    def evaluate(self, point):
        return np.array([c.evaluate(point) for c in self.comps])

    def jacobian_at(self, point):
        return np.array([[d.evaluate(point) for d in row] for row in self.jacobian()])

    def __str__(self):
        return "(" + ", ".join(str(c) for c in self.comps) + ")"

    def __repr__(self):
        return f"PolyMap({self.source.name} -> {self.target.name}: {self})"


def pullback(phi: PolyMap, alpha, trunc=None):
    """φ*α for a form (or scalar) on the target chart."""
    if isinstance(alpha, Poly):
        return phi.pull_scalar(alpha, trunc)
    if alpha.chart != phi.target:
        raise ChartMismatch("form does not live on the map's target chart")
    src = phi.source
    dphi = [DiffForm(src, 1, {(l,): c.diff(l) for l in range(src.dim)}) for c in phi.comps]
    out = DiffForm.zero(src, alpha.degree)
    for idx, f in alpha.comps.items():
        term = DiffForm.from_scalar(phi.pull_scalar(f, trunc))
        for i in idx:
            term = term.wedge(dphi[i])
        out = out + term
    return out


def pushforward_pointwise(phi: PolyMap, point, X: VectorField):
    """Tφ_p(X_p): the Jacobian at ``point`` applied to X evaluated there."""
    if X.chart != phi.source:
        raise ChartMismatch("vector field does not live on the map's source chart")
    return phi.jacobian_at(point) @ X.evaluate(point)


class _Graded:
    """Homogeneous-or-mixed element of the exterior algebra used while parsing."""

    __slots__ = ("chart", "kind", "comps")

    def __init__(self, chart, kind, comps):
        self.chart = chart
        self.kind = kind
        self.comps = comps

    def _merge(self, other, sign=1):
        if isinstance(other, Poly):
            other = _Graded(self.chart, self.kind, {(): other})
        out = dict(self.comps)
        for k, v in other.comps.items():
            out[k] = out.get(k, Poly(self.chart)) + (v if sign > 0 else -v)
        return _Graded(self.chart, self.kind, out)

    def __add__(self, other):
        return self._merge(other)

    def __radd__(self, other):
        return self._merge(other)

    def __sub__(self, other):
        return self._merge(other, -1)

    def __rsub__(self, other):
        return (-self)._merge(other)

    def __neg__(self):
        return _Graded(self.chart, self.kind, {k: -v for k, v in self.comps.items()})

    def __mul__(self, other):
        if isinstance(other, Poly):
            return _Graded(self.chart, self.kind, {k: v * other for k, v in self.comps.items()})
        if isinstance(other, _Graded):
            if other.kind != self.kind:
                raise SymbolicError("cannot mix dx and Dx symbols in one expression")
            out = {}
            for i, f in self.comps.items():
                for j, g in other.comps.items():
                    sign, key = canon(i + j)
                    if sign:
                        out[key] = out.get(key, Poly(self.chart)) + (f * g if sign > 0 else -(f * g))
            return _Graded(self.chart, self.kind, out)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, Poly):
            return self * other
        return NotImplemented


def _parse_graded(chart, text, kind):
    prefix = "d" if kind == "form" else "D"

    def atom(name):
        if name.startswith(prefix) and name[1:] in chart.coords:
            return _Graded(chart, kind, {(chart.index(name[1:]),): Poly.constant(chart, 1)})
        return None

    value = _Parser(chart, text, atom=atom).parse()
    if isinstance(value, Poly):
        value = _Graded(chart, kind, {(): value})
    degrees = {len(k) for k, v in value.comps.items() if v}
    if len(degrees) > 1:
        raise SymbolicError(f"expression {text!r} is not of homogeneous degree")
    degree = degrees.pop() if degrees else 0
    return degree, {k: v for k, v in value.comps.items() if v}


def parse_form(chart: Chart, text: str, degree=None) -> DiffForm:
    """Parse forms written like ``"x*dx^dy + y^2*dz"``."""
    deg, comps = _parse_graded(chart, text, "form")
    if not comps and degree is not None:
        deg = degree
    if degree is not None and deg != degree:
        raise SymbolicError(f"expected a {degree}-form, got degree {deg}")
    return DiffForm(chart, deg, comps)


def parse_multivector(chart: Chart, text: str, degree=None) -> MultiVector:
    """Parse multivectors written like ``"z*Dx^Dy + x*Dy^Dz"``."""
    deg, comps = _parse_graded(chart, text, "vector")
    if not comps and degree is not None:
        deg = degree
    if degree is not None and deg != degree:
        raise SymbolicError(f"expected a degree-{degree} multivector, got degree {deg}")
    return MultiVector(chart, deg, comps)


def parse_vector(chart: Chart, spec) -> VectorField:
    """Vector field from a ``Dx`` expression, a component list, or a name map."""
    if isinstance(spec, VectorField):
        return spec
    if isinstance(spec, str):
        return parse_multivector(chart, spec, degree=1).to_vector()
    if isinstance(spec, dict):
        comps = [Poly(chart)] * chart.dim
        comps = list(comps)
        for k, v in spec.items():
            comps[chart.index(k)] = chart.parse(str(v))
        return VectorField(chart, comps)
    return VectorField(chart, [chart.parse(str(v)) if not isinstance(v, Poly) else v for v in spec])
