"""Small exact linear algebra over ``Fraction`` (lists of rows)."""

from __future__ import annotations

from fractions import Fraction

__all__ = [
    "mat",
    "rref",
    "rank",
    "nullspace",
    "solve",
    "inverse",
    "matmul",
    "transpose",
    "columns",
    "from_columns",
    "identity",
]


def mat(rows):
    return [[Fraction(v) for v in row] for row in rows]


def identity(n):
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def transpose(a):
    if not a:
        return []
    return [list(col) for col in zip(*a)]


def matmul(a, b):
    bt = transpose(b)
    return [[sum((x * y for x, y in zip(row, col)), Fraction(0)) for col in bt] for row in a]


def columns(a):
    return transpose(a)


def from_columns(cols, nrows=None):
    if not cols:
        return [[] for _ in range(nrows or 0)]
    return transpose(cols)


def rref(a):
    """Reduced row echelon form; returns (matrix, pivot columns)."""
    m = [list(map(Fraction, row)) for row in a]
    rows = len(m)
    cols = len(m[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(cols):
        p = next((i for i in range(r, rows) if m[i][c] != 0), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        piv = m[r][c]
        m[r] = [v / piv for v in m[r]]
        for i in range(rows):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [v - f * w for v, w in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return m, pivots


def rank(a) -> int:
    if not a or not a[0]:
        return 0
    return len(rref(a)[1])


def nullspace(a, ncols=None):
    """Basis (list of column vectors) of {v : a v = 0}."""
    if not a:
        n = ncols or 0
        return [[Fraction(int(i == j)) for i in range(n)] for j in range(n)]
    n = len(a[0])
    m, pivots = rref(a)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * n
        v[f] = Fraction(1)
        for row, p in zip(m, pivots):
            v[p] = -row[f]
        basis.append(v)
    return basis


def solve(a, b):
    """Solve a x = b for square invertible a; b is a vector or a matrix."""
    n = len(a)
    vec = b and not isinstance(b[0], list)
    rhs = [[v] for v in b] if vec else b
    aug = [list(map(Fraction, row)) + list(map(Fraction, r)) for row, r in zip(a, rhs)]
    m, pivots = rref(aug)
    if pivots[:n] != list(range(n)):
        raise ZeroDivisionError("singular matrix")
    x = [row[n:] for row in m[:n]]
    return [r[0] for r in x] if vec else x


def inverse(a):
    return solve(a, identity(len(a)))
