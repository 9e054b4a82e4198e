"""Exact polynomial arithmetic over the rationals on named charts.

Scalar fields are sparse maps from exponent tuples to ``Fraction``
coefficients. Chart variables may be flagged invertible, in which case
negative exponents are allowed (Laurent polynomials on the domain where
that variable is nonzero). Normal variables are never invertible.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

__all__ = [
    "Chart",
    "Poly",
    "ScalarField",
    "Jet",
    "SymbolicError",
    "ParseError",
    "UnknownVariable",
    "NotDivisible",
    "NotInvertible",
    "ChartMismatch",
    "MissingAssignment",
    "parse_scalar",
    "differentiate",
    "substitute",
    "exact_divide",
    "as_fraction",
]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class SymbolicError(ValueError):
    """Base class for errors raised by the exact layer."""


class ParseError(SymbolicError):
    def __init__(self, message, text="", pos=0):
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at position {pos}" + (f" in {text!r}" if text else ""))


class UnknownVariable(SymbolicError):
    def __init__(self, name, chart=None):
        self.name = name
        where = f" on chart {chart.name!r}" if chart is not None else ""
        super().__init__(f"unknown variable {name!r}{where}")


class NotDivisible(SymbolicError):
    """Raised when an exact division fails; ``term`` names the offending term."""

    def __init__(self, var, term):
        self.var = var
        self.term = term
        super().__init__(f"not divisible by {var}: offending term {term}")


class NotInvertible(SymbolicError):
    pass


class ChartMismatch(SymbolicError):
    pass


class MissingAssignment(SymbolicError):
    pass


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    raise TypeError(f"cannot convert {value!r} to an exact rational")


@dataclass(frozen=True, eq=False)
class Chart:
    """A named coordinate chart.

    ``transverse`` and ``normal`` give the x- and y-blocks of a submanifold
    chart; both are empty for a plain chart. ``invertible`` lists variables
    allowed to carry negative exponents.
    """

    name: str
    coords: tuple
    transverse: tuple = ()
    normal: tuple = ()
    invertible: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "transverse", tuple(self.transverse))
        object.__setattr__(self, "normal", tuple(self.normal))
        object.__setattr__(self, "invertible", frozenset(self.invertible))
        if len(set(self.coords)) != len(self.coords):
            raise SymbolicError(f"chart {self.name!r}: duplicate variable names")
        for c in self.coords:
            if not _IDENT.match(c):
                raise SymbolicError(f"chart {self.name!r}: invalid variable name {c!r}")
        names = set(self.coords)
        for c in self.coords:
            if ("d" + c) in names or ("D" + c) in names:
                raise SymbolicError(
                    f"chart {self.name!r}: variable names {c!r} and d/D-prefixed copies clash"
                )
        if self.transverse or self.normal:
            t, n = set(self.transverse), set(self.normal)
            if t & n or (t | n) != names:
                raise SymbolicError(
                    f"chart {self.name!r}: transverse and normal blocks must partition the coordinates"
                )
        bad = set(self.invertible) - names
        if bad:
            raise UnknownVariable(sorted(bad)[0], self)
        if set(self.invertible) & set(self.normal):
            raise SymbolicError(f"chart {self.name!r}: normal variables cannot be invertible")

    def __eq__(self, other):
        return (
            isinstance(other, Chart)
            and self.coords == other.coords
            and self.invertible == other.invertible
        )

    def __hash__(self):
        return hash((self.coords, self.invertible))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def is_submanifold_chart(self) -> bool:
        return bool(self.transverse or self.normal)

    def index(self, name: str) -> int:
        try:
            return self.coords.index(name)
        except ValueError:
            raise UnknownVariable(name, self) from None

    def normal_indices(self) -> tuple:
        return tuple(self.index(n) for n in self.normal)

    def transverse_indices(self) -> tuple:
        return tuple(self.index(n) for n in self.transverse)

    def var(self, name: str) -> "Poly":
        return Poly.variable(self, name)

    def vars(self):
        return tuple(Poly.variable(self, c) for c in self.coords)

    def zero(self) -> "Poly":
        return Poly(self)

    def const(self, c) -> "Poly":
        return Poly.constant(self, c)

    def parse(self, text: str) -> "Poly":
        return parse_scalar(self, text)


def _coerce(chart, other):
    if isinstance(other, Poly):
        if other.chart != chart:
            raise ChartMismatch(f"charts {chart.name!r} and {other.chart.name!r} differ")
        return other
    if isinstance(other, (int, Fraction, Rational)):
        return Poly.constant(chart, other)
    return NotImplemented


class Poly:
    """Sparse polynomial with exact rational coefficients on a chart.

    Instances are immutable by convention; every operation returns a new
    object.
    """

    __slots__ = ("chart", "terms", "_hash")

    def __init__(self, chart: Chart, terms=None):
        self.chart = chart
        clean = {}
        if terms:
            n = chart.dim
            for e, c in terms.items():
                if c:
                    e = tuple(e)
                    if len(e) != n:
                        raise SymbolicError("exponent vector length does not match chart")
                    clean[e] = c if isinstance(c, Fraction) else as_fraction(c)
        self.terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, chart, terms):
        p = cls.__new__(cls)
        p.chart = chart
        p.terms = terms
        p._hash = None
        return p

    @classmethod
    def constant(cls, chart, c):
        c = as_fraction(c)
        return cls._raw(chart, {(0,) * chart.dim: c} if c else {})

    @classmethod
    def variable(cls, chart, name):
        i = chart.index(name)
        e = [0] * chart.dim
        e[i] = 1
        return cls._raw(chart, {tuple(e): Fraction(1)})

    @classmethod
    def monomial(cls, chart, exps, coeff=1):
        coeff = as_fraction(coeff)
        return cls._raw(chart, {tuple(exps): coeff} if coeff else {})

    # basic queries
    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def is_constant(self) -> bool:
        return all(not any(e) for e in self.terms)

    def constant_value(self) -> Fraction:
        return self.terms.get((0,) * self.chart.dim, Fraction(0))

    def degree(self, variables=None) -> int:
        """Largest total degree, optionally counting only ``variables``."""
        if not self.terms:
            return -1
        idx = self._indices(variables)
        return max(sum(e[i] for i in idx) for e in self.terms)

    def min_degree(self, variables=None) -> int:
        if not self.terms:
            return math.inf
        idx = self._indices(variables)
        return min(sum(e[i] for i in idx) for e in self.terms)

    def _indices(self, variables):
        if variables is None:
            return range(self.chart.dim)
        return [self.chart.index(v) if isinstance(v, str) else v for v in variables]

    def variables(self) -> tuple:
        used = set()
        for e in self.terms:
            used.update(i for i, k in enumerate(e) if k)
        return tuple(self.chart.coords[i] for i in sorted(used))

    # arithmetic
    def __add__(self, other):
        other = _coerce(self.chart, other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            v = out.get(e, 0) + c
            if v:
                out[e] = v
            else:
                out.pop(e, None)
        return Poly._raw(self.chart, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw(self.chart, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = _coerce(self.chart, other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = _coerce(self.chart, other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, Rational)) and not isinstance(other, bool):
            c = as_fraction(other)
            if not c:
                return Poly._raw(self.chart, {})
            return Poly._raw(self.chart, {e: v * c for e, v in self.terms.items()})
        other = _coerce(self.chart, other)
        if other is NotImplemented:
            return other
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = out.get(e, 0) + c1 * c2
                if v:
                    out[e] = v
                else:
                    out.pop(e, None)
        return Poly._raw(self.chart, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Poly):
            if not other.is_constant() or not other:
                raise NotInvertible("division only by nonzero constants")
            other = other.constant_value()
        c = as_fraction(other)
        if not c:
            raise ZeroDivisionError("division by zero")
        return self * (1 / c)

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("exponent must be an integer")
        if n < 0:
            return self.inverse() ** (-n)
        result = Poly.constant(self.chart, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def inverse(self) -> "Poly":
        """Exact inverse of a nonzero monomial in invertible variables."""
        if len(self.terms) != 1:
            raise NotInvertible(f"{self} is not a monomial")
        (e, c), = self.terms.items()
        for i, k in enumerate(e):
            if k and self.chart.coords[i] not in self.chart.invertible:
                raise NotInvertible(f"{self} involves non-invertible variable {self.chart.coords[i]}")
        return Poly._raw(self.chart, {tuple(-k for k in e): 1 / c})

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.chart == other.chart and self.terms == other.terms
        if isinstance(other, (int, Fraction, Rational)):
            return self.terms == Poly.constant(self.chart, other).terms
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.chart, frozenset(self.terms.items())))
        return self._hash

    # calculus
    def diff(self, var) -> "Poly":
        i = self.chart.index(var) if isinstance(var, str) else var
        out = {}
        for e, c in self.terms.items():
            k = e[i]
            if k:
                e2 = list(e)
                e2[i] = k - 1
                out[tuple(e2)] = c * k
        return Poly._raw(self.chart, out)

    def exact_divide(self, var) -> "Poly":
        i = self.chart.index(var) if isinstance(var, str) else var
        name = self.chart.coords[i]
        laurent = name in self.chart.invertible
        out = {}
        for e, c in self.terms.items():
            if e[i] <= 0 and not laurent:
                raise NotDivisible(name, _term_str(self.chart, e, c, lead=True))
            e2 = list(e)
            e2[i] -= 1
            out[tuple(e2)] = c
        return Poly._raw(self.chart, out)

    def truncate(self, variables, order: int) -> "Poly":
        """Drop terms whose degree in ``variables`` exceeds ``order``."""
        idx = self._indices(variables)
        return Poly._raw(
            self.chart,
            {e: c for e, c in self.terms.items() if sum(e[i] for i in idx) <= order},
        )

    def homogeneous_part(self, variables, k: int) -> "Poly":
        idx = self._indices(variables)
        return Poly._raw(
            self.chart,
            {e: c for e, c in self.terms.items() if sum(e[i] for i in idx) == k},
        )

    def subs(self, assignment, target=None, trunc=None) -> "Poly":
        return substitute(self, assignment, target=target, trunc=trunc)

    def restrict(self, values) -> "Poly":
        """Substitute constants for some variables, keeping the chart."""
        assignment = {c: self.chart.var(c) for c in self.chart.coords}
        for k, v in values.items():
            assignment[k] = Poly.constant(self.chart, v)
        return substitute(self, assignment, target=self.chart)

    def with_chart(self, chart: Chart, mapping=None) -> "Poly":
        """Re-home onto another chart by variable name (or an explicit name map)."""
        mapping = mapping or {}
        idx = []
        for c in self.chart.coords:
            name = mapping.get(c, c)
            idx.append(chart.index(name) if name in chart.coords else name)
        out = {}
        for e, c in self.terms.items():
            e2 = [0] * chart.dim
            for i, k in enumerate(e):
                if k:
                    if not isinstance(idx[i], int):
                        raise UnknownVariable(idx[i], chart)
                    e2[idx[i]] += k
            out[tuple(e2)] = c
        return Poly(chart, out)

    # evaluation
    def evaluate(self, point) -> float:
        total = 0.0
        pt = [float(p) for p in point]
        for e, c in self.terms.items():
            v = float(c)
            for x, k in zip(pt, e):
                if k:
                    v *= x ** k
            total += v
        return total

    def eval_exact(self, point) -> Fraction:
        pt = [as_fraction(p) for p in point]
        total = Fraction(0)
        for e, c in self.terms.items():
            v = c
            for x, k in zip(pt, e):
                if k:
                    v *= x ** k
            total += v
        return total

    def __call__(self, *point):
        if len(point) == 1 and not isinstance(point[0], (int, float, Fraction)):
            point = tuple(point[0])
        return self.evaluate(point)

    # printing
    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda ec: (sum(ec[0]), ec[0]), reverse=True)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for n, (e, c) in enumerate(self.sorted_terms()):
            s = _term_str(self.chart, e, abs(c), lead=False)
            if n == 0:
                parts.append(("-" if c < 0 else "") + s)
            else:
                parts.append((" - " if c < 0 else " + ") + s)
        return "".join(parts)

    def __repr__(self):
        return f"Poly({self.chart.name}: {self})"


ScalarField = Poly


def _mono_str(chart, e):
    out = []
    for name, k in zip(chart.coords, e):
        if k == 1:
            out.append(name)
        elif k:
            out.append(f"{name}^{k}")
    return "*".join(out)


def _term_str(chart, e, c, lead=False):
    mono = _mono_str(chart, e)
    c = as_fraction(c)
    if lead:
        return (str(c) + ("*" + mono if mono else "")) if c != 1 else (mono or "1")
    if not mono:
        return str(c)
    if c == 1:
        return mono
    return f"{c}*{mono}"


def differentiate(f: Poly, var: str) -> Poly:
    return f.diff(var)


def exact_divide(f: Poly, var: str) -> Poly:
    return f.exact_divide(var)


def _weighted(e, weights):
    return sum(w * k for w, k in zip(weights, e))


def _truncated_mul(a: Poly, b: Poly, weights, order):
    out = {}
    for e1, c1 in a.terms.items():
        w1 = _weighted(e1, weights)
        for e2, c2 in b.terms.items():
            if w1 + _weighted(e2, weights) > order:
                continue
            e = tuple(x + y for x, y in zip(e1, e2))
            v = out.get(e, 0) + c1 * c2
            if v:
                out[e] = v
            else:
                out.pop(e, None)
    return Poly._raw(a.chart, out)


def _series_inverse(g: Poly, weights, order):
    lead = Poly._raw(g.chart, {e: c for e, c in g.terms.items() if _weighted(e, weights) == 0})
    rest = g - lead
    if any(_weighted(e, weights) < 0 for e in rest.terms):
        raise NotInvertible(f"{g} has terms of negative truncation weight")
    inv0 = lead.inverse()
    u = -_truncated_mul(rest, inv0, weights, order)
    total = Poly.constant(g.chart, 1)
    power = Poly.constant(g.chart, 1)
    for _ in range(order):
        power = _truncated_mul(power, u, weights, order)
        if not power:
            break
        total = total + power
    return _truncated_mul(total, inv0, weights, order)


def substitute(f: Poly, assignment, target: Chart = None, trunc=None) -> Poly:
    """Compose ``f`` with the images in ``assignment``.

    ``trunc = (weights, order)`` drops terms of weighted degree above
    ``order`` on the target chart; ``weights`` maps target variable names to
    integer weights (missing names weigh 0). Negative powers of images that
    are not monomials are expanded as truncated series, which requires
    ``trunc``.
    """
    images = {}
    for k, v in assignment.items():
        if isinstance(v, Poly):
            if target is None:
                target = v.chart
            elif v.chart != target:
                raise ChartMismatch("substitution images live on different charts")
        images[k] = v
    if target is None:
        raise ChartMismatch("target chart undetermined: pass target= for constant images")
    for k, v in list(images.items()):
        if not isinstance(v, Poly):
            images[k] = Poly.constant(target, v)
    chart = f.chart
    used = set()
    for e in f.terms:
        used.update(i for i, k in enumerate(e) if k)
    for i in used:
        if chart.coords[i] not in images:
            raise MissingAssignment(f"no image assigned to {chart.coords[i]!r}")
    if trunc is not None:
        wmap, order = trunc
        weights = tuple(wmap.get(c, 0) for c in target.coords)
    else:
        weights, order = None, None

    def mul(a, b):
        return a * b if weights is None else _truncated_mul(a, b, weights, order)

    cache = {}

    def power(i, k):
        key = (i, k)
        if key in cache:
            return cache[key]
        g = images[chart.coords[i]]
        if k == 1:
            r = g
        elif k == -1:
            try:
                r = g.inverse()
            except NotInvertible:
                if weights is None:
                    raise
                r = _series_inverse(g, weights, order)
        elif k > 0:
            h = power(i, k // 2)
            r = mul(h, h)
            if k % 2:
                r = mul(r, g)
        else:
            r = power(i, -1)
            r = power_of(r, -k)
        cache[key] = r
        return r

    def power_of(p, n):
        r = Poly.constant(target, 1)
        for _ in range(n):
            r = mul(r, p)
        return r

    out = Poly._raw(target, {})
    for e, c in f.terms.items():
        term = Poly.constant(target, c)
        for i, k in enumerate(e):
            if k:
                term = mul(term, power(i, k))
                if not term:
                    break
        out = out + term
    if weights is not None:
        out = Poly._raw(target, {e: c for e, c in out.terms.items() if _weighted(e, weights) <= order})
    return out


# parsing

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|([A-Za-z_][A-Za-z0-9_]*)|(.))")


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        if m.group(1) is not None:
            tokens.append(("num", m.group(1), m.start(1)))
        elif m.group(2) is not None:
            tokens.append(("id", m.group(2), m.start(2)))
        elif m.group(3) is not None:
            ch = m.group(3)
            if ch not in "+-*/^()":
                raise ParseError(f"unexpected character {ch!r}", text, m.start(3))
            tokens.append(("op", ch, m.start(3)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser for scalar expressions.

    ``atom`` is an optional hook mapping identifiers that are not chart
    variables to algebra elements (used for dx / Dx basis symbols).
    """

    def __init__(self, chart, text, atom=None):
        self.chart = chart
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.atom = atom

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, self.text, tok[2])

    def parse(self):
        if self.peek()[0] == "end":
            self.error("empty expression")
        value = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return value

    def expr(self):
        sign = 1
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            sign = -1 if tok[1] == "-" else 1
        value = self.term()
        if sign < 0:
            value = -value
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "+-":
                self.take()
                rhs = self.term()
                value = value + rhs if tok[1] == "+" else value - rhs
            else:
                return value

    def term(self):
        value = self.factor()
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] == "*":
                self.take()
                value = value * self.factor()
            elif tok[0] == "op" and tok[1] == "/":
                self.take()
                den = self.take()
                if den[0] != "num":
                    self.error("division is only allowed by a numeric literal", den)
                d = Fraction(den[1])
                if not d:
                    self.error("division by zero", den)
                value = value * (1 / d)
            else:
                return value

    def factor(self):
        start = self.peek()
        value = self.primary()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            if tok[0] == "num" or (tok[0] == "op" and tok[1] == "-"):
                neg = False
                if tok[0] == "op":
                    self.take()
                    neg = True
                    tok = self.peek()
                if tok[0] != "num" or "." in tok[1]:
                    self.error("exponent must be an integer")
                self.take()
                k = int(tok[1])
                if not isinstance(value, Poly):
                    self.error("powers apply to scalars only", tok)
                try:
                    value = value ** (-k if neg else k)
                except NotInvertible as exc:
                    raise ParseError(str(exc), self.text, start[2]) from None
            else:
                rhs = self.primary()
                if isinstance(value, Poly) or isinstance(rhs, Poly):
                    self.error("'^' between scalars needs an integer exponent", tok)
                value = value * rhs
        return value

    def primary(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return Poly.constant(self.chart, Fraction(val))
        if kind == "id":
            if val in self.chart.coords:
                return Poly.variable(self.chart, val)
            if self.atom is not None:
                a = self.atom(val)
                if a is not None:
                    return a
            raise UnknownVariable(val, self.chart)
        if kind == "op" and val == "(":
            value = self.expr()
            close = self.take()
            if close[0] != "op" or close[1] != ")":
                self.error("expected ')'", close)
            return value
        self.error(f"unexpected token {val!r}" if val else "unexpected end of expression", tok)


def parse_scalar(chart: Chart, text: str) -> Poly:
    """Parse an expression like ``"3/2*x^2*y - y"`` into a polynomial."""
    if not isinstance(text, str):
        return Poly.constant(chart, text)
    return _Parser(chart, text).parse()


class Jet:
    """Truncated Taylor data at a rational base point.

    The polynomial ``poly`` is written in offset variables h = x - point,
    reusing the chart's variable names, and has total degree at most
    ``order``.
    """

    __slots__ = ("chart", "point", "order", "poly")

    def __init__(self, chart, point, order, poly=None):
        self.chart = chart
        self.point = tuple(as_fraction(p) for p in point)
        self.order = int(order)
        poly = poly if poly is not None else Poly(chart)
        self.poly = poly.truncate(None, self.order)

    @classmethod
    def from_poly(cls, f: Poly, point, order):
        point = tuple(as_fraction(p) for p in point)
        chart = f.chart
        assignment = {c: chart.var(c) + p for c, p in zip(chart.coords, point)}
        weights = {c: 1 for c in chart.coords}
        shifted = substitute(f, assignment, trunc=(weights, order))
        return cls(chart, point, order, shifted)

    def _check(self, other):
        if not isinstance(other, Jet):
            return Jet(self.chart, self.point, self.order, Poly.constant(self.chart, other))
        if other.point != self.point or other.chart != self.chart:
            raise ChartMismatch("jets at different base points")
        return other

    def __add__(self, other):
        other = self._check(other)
        return Jet(self.chart, self.point, min(self.order, other.order), self.poly + other.poly)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._check(other)
        return Jet(self.chart, self.point, min(self.order, other.order), self.poly - other.poly)

    def __neg__(self):
        return Jet(self.chart, self.point, self.order, -self.poly)

    def __mul__(self, other):
        other = self._check(other)
        k = min(self.order, other.order)
        w = tuple(1 for _ in self.chart.coords)
        return Jet(self.chart, self.point, k, _truncated_mul(self.poly, other.poly, w, k))

    __rmul__ = __mul__

    def __eq__(self, other):
        return (
            isinstance(other, Jet)
            and self.point == other.point
            and self.order == other.order
            and self.poly == other.poly
        )

    def __hash__(self):
        return hash((self.point, self.order, self.poly))

    def value(self) -> Fraction:
        return self.poly.constant_value()

    def vanishing_order(self) -> int:
        return self.poly.min_degree()

    def evaluate(self, offset) -> float:
        return self.poly.evaluate(offset)

    def __repr__(self):
        return f"Jet(order={self.order}, at={tuple(str(p) for p in self.point)}: {self.poly})"
