"""Anchored vector bundles and Lie algebroids in a local frame.

Sections are tuples of polynomials (one per frame element). Sections of
the deformation bundle D(E) are stored as pairs (ξ, v) with ξ a section of
the pulled-back bundle κ*E and v a vector field on the deformation chart
satisfying a(ξ) = Tκ(v).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _linalg as la
from .defspace import DeformationChart
from .eulerflow import (
    DEFAULT_BOX,
    DEFAULT_TOL,
    FlowError,
    NotEulerLike,
    TubularEmbedding,
    _run,
    euler_like_check,
    fit_linear_combination,
    w_field,
)
from .kernels import PackedSystem
from .report import Report
from .symcore import Chart, ChartMismatch, NotDivisible, Poly, SymbolicError
from .tensorcalc import VectorField, lie_bracket

__all__ = [
    "RankDrop",
    "NonConstantKernel",
    "AnchoredBundle",
    "DSection",
    "DeformedBundle",
    "FramedIsomorphism",
    "TransportEngine",
    "anchored_pullback",
    "euler_section",
    "w_section",
    "transport_section",
    "splitting_iso",
    "constant_kernel",
]


class RankDrop(SymbolicError):
    pass


class NonConstantKernel(SymbolicError):
    pass


def _zero(chart):
    return Poly(chart)


class AnchoredBundle:
    """Rank-r bundle with anchor matrix ρ (dim × r) and structure functions c^k_ij.

    Without structure functions the flat-frame bracket
    [σ,τ]^k = a(σ)(τ^k) − a(τ)(σ^k) is used.
    """

    def __init__(self, chart: Chart, anchor, structure=None, lie=False, name="E"):
        self.chart = chart
        self.name = name
        self.anchor = [[_as_poly(chart, e) for e in row] for row in anchor]
        if len(self.anchor) != chart.dim:
            raise SymbolicError("anchor needs one row per chart coordinate")
        self.rank = len(self.anchor[0]) if self.anchor else 0
        self.structure = {}
        if structure:
            items = structure.items() if isinstance(structure, dict) else _nested_items(structure)
            for (k, i, j), f in items:
                f = _as_poly(chart, f)
                if not f:
                    continue
                if i == j:
                    raise SymbolicError("structure functions must be antisymmetric")
                key, val = ((k, i, j), f) if i < j else ((k, j, i), -f)
                prev = self.structure.get(key)
                if prev is not None and prev != val:
                    raise SymbolicError(f"inconsistent structure function c^{k}_{i}{j}")
                self.structure[key] = val
        self.lie = lie
        if lie:
            jac = self.jacobi_residual()
            comp = self.anchor_compatibility_residual()
            if jac or comp:
                raise SymbolicError(f"{name} is declared a Lie algebroid but fails Jacobi or anchor compatibility")

    @property
    def has_structure(self):
        return bool(self.structure)

    def c(self, k, i, j) -> Poly:
        if i == j:
            return _zero(self.chart)
        if i < j:
            return self.structure.get((k, i, j), _zero(self.chart))
        return -self.structure.get((k, j, i), _zero(self.chart))

    def frame(self, a):
        return tuple(Poly.constant(self.chart, int(b == a)) for b in range(self.rank))

    def section(self, comps):
        comps = tuple(_as_poly(self.chart, c) for c in comps)
        if len(comps) != self.rank:
            raise SymbolicError("section has the wrong number of components")
        return comps

    def anchor_of(self, s) -> VectorField:
        comps = []
        for row in self.anchor:
            acc = _zero(self.chart)
            for r, f in zip(row, s):
                if r and f:
                    acc = acc + r * f
            comps.append(acc)
        return VectorField(self.chart, comps)

    def bracket(self, s, t):
        X, Y = self.anchor_of(s), self.anchor_of(t)
        out = []
        for k in range(self.rank):
            acc = X(t[k]) - Y(s[k])
            if self.structure:
                for i in range(self.rank):
                    if not s[i]:
                        continue
                    for j in range(self.rank):
                        if t[j]:
                            c = self.c(k, i, j)
                            if c:
                                acc = acc + c * s[i] * t[j]
            out.append(acc)
        return tuple(out)

    def jacobi(self, a, b, c):
        br = self.bracket
        parts = [br(br(a, b), c), br(br(b, c), a), br(br(c, a), b)]
        return tuple(x + y + z for x, y, z in zip(*parts))

    def jacobi_residual(self):
        """Number of nonzero Jacobiator components over frame triples."""
        bad = 0
        for i in range(self.rank):
            for j in range(i + 1, self.rank):
                for k in range(j + 1, self.rank):
                    bad += sum(1 for f in self.jacobi(self.frame(i), self.frame(j), self.frame(k)) if f)
        return bad

    def anchor_compatibility_residual(self):
        bad = 0
        for i in range(self.rank):
            for j in range(i + 1, self.rank):
                lhs = self.anchor_of(self.bracket(self.frame(i), self.frame(j)))
                rhs = lie_bracket(self.anchor_of(self.frame(i)), self.anchor_of(self.frame(j)))
                bad += sum(1 for f in (lhs - rhs).comps if f)
        return bad

    def anchor_matrix(self, point):
        return np.array([[e.evaluate(point) for e in row] for row in self.anchor])

    def derivation_matrix(self, sigma):
        """M(σ) with [σ,τ] = a(σ)(τ) + M(σ)τ, as a matrix of polynomials."""
        r, n = self.rank, self.chart.dim
        M = [[_zero(self.chart) for _ in range(r)] for _ in range(r)]
        for k in range(r):
            dsk = [sigma[k].diff(l) for l in range(n)]
            for j in range(r):
                acc = _zero(self.chart)
                for l in range(n):
                    if dsk[l] and self.anchor[l][j]:
                        acc = acc - dsk[l] * self.anchor[l][j]
                if self.structure:
                    for i in range(r):
                        c = self.c(k, i, j)
                        if c and sigma[i]:
                            acc = acc + c * sigma[i]
                M[k][j] = acc
        return M


def _as_poly(chart, e):
    if isinstance(e, Poly):
        if e.chart != chart:
            raise ChartMismatch("entry on another chart")
        return e
    if isinstance(e, str):
        return chart.parse(e)
    return Poly.constant(chart, e)


def _nested_items(c):
    for k, mat in enumerate(c):
        for i, row in enumerate(mat):
            for j, f in enumerate(row):
                yield (k, i, j), f


def constant_kernel(rows, chart: Chart, normal_zero, probes, ncols=None):
    """Exact kernel of a polynomial matrix restricted to N, required constant.

    The kernel is computed exactly at rational probe points of N; all probes
    must agree and the candidate basis is then verified symbolically.
    """
    restricted = [[e.restrict(normal_zero) for e in row] for row in rows]
    if ncols is None:
        ncols = len(rows[0]) if rows else 0
    if not rows:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    basis = None
    ranks = set()
    for p in probes:
        num = [[e.eval_exact(p) for e in row] for row in restricted]
        ranks.add(la.rank(num) if num else 0)
        ns = la.nullspace(num, ncols) if num else la.nullspace([], ncols)
        red = la.rref([list(v) for v in ns])[0] if ns else []
        red = [row for row in red if any(row)]
        if basis is None:
            basis = red
        elif red != basis:
            raise NonConstantKernel(f"kernel of the normal anchor rows varies along N (probe {p})")
    if len(ranks) > 1:
        raise RankDrop(f"rank of the normal anchor rows varies along N: {sorted(ranks)}")
    basis = basis or []
    for v in basis:
        for row in restricted:
            acc = _zero(chart)
            for e, c in zip(row, v):
                if c:
                    acc = acc + e * c
            if acc:
                raise NonConstantKernel("candidate constant kernel fails exact verification")
    return [list(v) for v in basis]


def _n_probes(chart: Chart, count=3):
    pts = []
    for k in range(count):
        p = []
        for c in chart.coords:
            if c in chart.normal:
                p.append(Fraction(0))
            else:
                p.append(Fraction(3 + 2 * k, 2 + k) + Fraction(len(p), 7))
        pts.append(p)
    return pts


def _rehome(p: Poly, chart: Chart):
    return p.with_chart(chart)


def anchored_pullback(E: AnchoredBundle, kind: str, dc: DeformationChart = None, probes=None):
    """i^!E over N, ν(E) = p^!i^!E over the normal chart, or D(E) = κ^!E.

    Returns (bundle, frame) where ``frame`` expresses the new frame in the
    old one (constant vectors for i^!; None for the others). For kind
    ``"kappa"`` a :class:`DeformedBundle` is returned instead.
    """
    chart = E.chart
    dc = dc or DeformationChart(chart)
    if kind == "kappa":
        return DeformedBundle(E, dc), None
    probes = probes or _n_probes(chart)
    zero = {y: 0 for y in chart.normal}
    yrows = [E.anchor[i] for i in chart.normal_indices()]
    for p in probes:
        num = [[e.eval_exact(p) for e in row] for row in yrows]
        if num and la.rank(num) < len(yrows):
            raise RankDrop(f"anchor not transverse to N at {tuple(str(v) for v in p)}")
    K = constant_kernel(yrows, chart, zero, probes, ncols=E.rank)
    Nchart = Chart(f"N({chart.name})", chart.transverse, invertible=chart.invertible & set(chart.transverse))
    m = len(K)
    anchorN = []
    for i in chart.transverse_indices():
        row = []
        for a in range(m):
            acc = _zero(chart)
            for j, c in enumerate(K[a]):
                if c and E.anchor[i][j]:
                    acc = acc + E.anchor[i][j] * c
            row.append(_rehome(acc.restrict(zero), Nchart) if acc else _zero(Nchart))
        anchorN.append(row)
    # structure functions of the restricted frame, expressed back in K
    structure = {}
    if E.structure:
        Kt = la.transpose(K)
        piv = la.rref(K)[1]
        sub = [[K[a][p] for a in range(m)] for p in piv]
        for a in range(m):
            for b in range(a + 1, m):
                vec = []
                for l in range(E.rank):
                    acc = _zero(chart)
                    for i in range(E.rank):
                        for j in range(E.rank):
                            if K[a][i] and K[b][j]:
                                c = E.c(l, i, j)
                                if c:
                                    acc = acc + c * (K[a][i] * K[b][j])
                    vec.append(acc.restrict(zero))
                inv = la.inverse(sub)
                coeff = []
                for row in inv:
                    acc = _zero(chart)
                    for q, p in enumerate(piv):
                        if row[q] and vec[p]:
                            acc = acc + vec[p] * row[q]
                    coeff.append(acc)
                for l in range(E.rank):
                    acc = _zero(chart)
                    for c2 in range(m):
                        if K[c2][l] and coeff[c2]:
                            acc = acc + coeff[c2] * K[c2][l]
                    if acc != vec[l]:
                        raise SymbolicError("bracket of restricted frame leaves a^{-1}(TN)")
                for c2 in range(m):
                    if coeff[c2]:
                        structure[(c2, a, b)] = _rehome(coeff[c2], Nchart)
    iE = AnchoredBundle(Nchart, anchorN, structure or None, name=f"i!{E.name}")
    if kind == "i":
        return iE, K
    if kind != "p":
        raise ValueError(f"unknown pullback kind {kind!r}")
    V = dc.nuchart
    s = len(chart.normal)
    r = m + s
    anchor = [[_zero(V) for _ in range(r)] for _ in range(V.dim)]
    xi = chart.transverse_indices()
    for row_n, i in enumerate(xi):
        for a in range(m):
            anchor[i][a] = anchorN[row_n][a].with_chart(V)
    for j, i in enumerate(chart.normal_indices()):
        anchor[i][m + j] = Poly.constant(V, 1)
    structure_nu = {key: f.with_chart(V) for key, f in structure.items()}
    nuE = AnchoredBundle(V, anchor, structure_nu or None, name=f"nu({E.name})")
    return nuE, K


@dataclass(frozen=True)
class DSection:
    """Section of D(E): ξ in the pulled-back frame and v on the deformation chart."""

    xi: tuple
    vec: VectorField


class DeformedBundle:
    """D(E) = κ^!E presented through pairs (ξ, v) with a(ξ) = Tκ(v)."""

    def __init__(self, E: AnchoredBundle, dc: DeformationChart):
        self.E = E
        self.dc = dc
        self.kappa = dc.kappa()
        D = dc.defchart
        self.anchor = [[self.kappa.pull_scalar(e) for e in row] for row in E.anchor]
        self.structure = {key: self.kappa.pull_scalar(f) for key, f in E.structure.items()}

    def c(self, k, i, j):
        D = self.dc.defchart
        if i == j:
            return Poly(D)
        if i < j:
            return self.structure.get((k, i, j), Poly(D))
        return -self.structure.get((k, j, i), Poly(D))

    def pull(self, s):
        return tuple(self.kappa.pull_scalar(f) for f in s)

    def theta(self) -> DSection:
        from .defspace import canonical_fields

        th, _ = canonical_fields(self.dc)
        return DSection(tuple(Poly(self.dc.defchart) for _ in range(self.E.rank)), th)

    def lift(self, tau) -> DSection:
        """D(τ) = τ∘κ paired with D(a(τ)); needs a(τ) tangent to N."""
        from .defspace import lift_vector_tangent

        return DSection(self.pull(tau), lift_vector_tangent(self.E.anchor_of(tau), self.dc))

    def anchor_defect(self, s: DSection):
        """a(ξ) − Tκ(v) as polynomials on the deformation chart (zero for valid pairs)."""
        D = self.dc.defchart
        kap = self.kappa
        out = []
        for i, row in enumerate(self.anchor):
            acc = Poly(D)
            for e, f in zip(row, s.xi):
                if e and f:
                    acc = acc + e * f
            tk = Poly(D)
            for l in range(D.dim):
                d = kap.comps[i].diff(l)
                if d and s.vec.comps[l]:
                    tk = tk + d * s.vec.comps[l]
            out.append(acc - tk)
        return out

    def bracket(self, s1: DSection, s2: DSection) -> DSection:
        r = self.E.rank
        xi = []
        for k in range(r):
            acc = s1.vec(s2.xi[k]) - s2.vec(s1.xi[k])
            if self.structure:
                for i in range(r):
                    for j in range(r):
                        c = self.c(k, i, j)
                        if c and s1.xi[i] and s2.xi[j]:
                            acc = acc + c * s1.xi[i] * s2.xi[j]
            xi.append(acc)
        return DSection(tuple(xi), lie_bracket(s1.vec, s2.vec))

    def w(self, sigma) -> DSection:
        return w_section(self.E, sigma, self.dc)


def euler_section(E: AnchoredBundle, grid, degree=1, max_den=1000):
    """Fit σ with σ|_N = 0 and a(σ) Euler-like; re-verified exactly."""
    cols = [[E.anchor[i][a] for i in range(E.chart.dim)] for a in range(E.rank)]
    coeffs = fit_linear_combination(cols, E.chart, 0, grid, degree=degree, max_den=max_den)
    sigma = tuple(coeffs)
    rep = euler_like_check(E.anchor_of(sigma))
    if not rep:
        raise NotEulerLike(f"fitted section fails after rounding: {rep.witness}")
    return sigma


def w_section(E: AnchoredBundle, sigma, dc: DeformationChart) -> DSection:
    """w = (σ∘κ/t, W) with exact division by t."""
    X = E.anchor_of(sigma)
    rep = euler_like_check(X)
    if not rep:
        raise NotEulerLike(str(rep.witness))
    kap = dc.kappa()
    try:
        omega = tuple(kap.pull_scalar(f).exact_divide(dc.t) if f else Poly(dc.defchart) for f in sigma)
    except NotDivisible as exc:
        raise NotEulerLike(f"section does not vanish along N: {exc}") from None
    return DSection(omega, w_field(X, dc))


def transport_section(E: AnchoredBundle, sigma, tau0, start, s, tol=DEFAULT_TOL, box=DEFAULT_BOX):
    """Values of φ̃_s·τ along the geometric flow of a(σ) from ``start``.

    Integrates dz/ds = −a(σ)(z) together with dξ/ds = M(σ)(z) ξ, where
    [σ,τ] = a(σ)(τ) + M(σ)τ. Returns (z(s), ξ(s)); ``tau0`` may be a vector
    or an r×q matrix of frame values.
    """
    X = E.anchor_of(sigma)
    M = E.derivation_matrix(sigma)
    field = [-c for c in X.comps]
    tau0 = np.asarray(tau0, dtype=float)
    cols = tau0.reshape(E.rank, -1)
    sysm = _augmented(E.chart, field, [(M, cols.shape[1])])
    state = np.concatenate([np.asarray(start, float), cols.T.ravel()])
    z = _run(sysm, state, s, tol, box, nbox=E.chart.dim).endpoint
    n = E.chart.dim
    xi = z[n:].reshape(cols.shape[1], E.rank).T
    return z[:n], xi.reshape(tau0.shape)


def _augmented(chart, field, blocks):
    from .eulerflow import augmented_system

    return augmented_system(chart, field, blocks)


def _augmented_polys(chart, field, blocks):
    sysm = _augmented(chart, field, blocks)
    return sysm


class TransportEngine:
    """Linear transport of frames along the W-flow on the deformation chart.

    Solves dz/du = W(z), dY/du = G(z) Y for u ∈ [0, 1], where G is a q×q
    matrix of polynomials. With ``sensitivities`` the first derivatives of
    the solution with respect to the starting point are propagated as well
    (variational equation of the whole augmented system).
    """

    def __init__(self, dc: DeformationChart, W: VectorField, G, ncols, tol=DEFAULT_TOL, box=DEFAULT_BOX,
                 sensitivities=False):
        self.dc = dc
        self.W = W
        self.q = len(G)
        self.ncols = ncols
        self.tol = tol
        self.box = box
        D = dc.defchart
        self.nz = D.dim
        self.system = _augmented(D, W.comps, [(G, ncols)])
        self.sens = None
        if sensitivities:
            big = self.system.chart
            polys = _unpack(self.system)
            jac = [[p.diff(l) for l in range(big.dim)] for p in polys]
            from .eulerflow import augmented_system

            self.sens = augmented_system(big, polys, [(jac, D.dim - 1)], prefix="d")

    def run(self, z0, Y0, dz0=None, dY0=None):
        """Returns (z1, Y1) or, with sensitivities, (z1, Y1, dz1, dY1)."""
        Y0 = np.asarray(Y0, dtype=float)
        base = np.concatenate([np.asarray(z0, float), Y0.T.ravel()])
        if self.sens is None:
            out = _run(self.system, base, 1.0, self.tol, self.box, nbox=self.nz).endpoint
            return out[: self.nz], out[self.nz:].reshape(self.ncols, self.q).T
        nl = self.nz - 1
        dbase = np.zeros((len(base), nl))
        dbase[: self.nz, :] = dz0
        for l in range(nl):
            dbase[self.nz:, l] = dY0[:, :, l].T.ravel()
        state = np.concatenate([base, dbase.T.ravel()])
        out = _run(self.sens, state, 1.0, self.tol, self.box, nbox=self.nz).endpoint
        nb = len(base)
        main = out[:nb]
        d = out[nb:].reshape(nl, nb).T
        z1 = main[: self.nz]
        Y1 = main[self.nz:].reshape(self.ncols, self.q).T
        dz1 = d[: self.nz, :]
        dY1 = np.zeros((self.q, self.ncols, nl))
        for l in range(nl):
            dY1[:, :, l] = d[self.nz:, l].reshape(self.ncols, self.q).T
        return z1, Y1, dz1, dY1


def _unpack(system: PackedSystem):
    """Rebuild the polynomial list of a packed system (exact coefficients are kept alongside)."""
    return system.polys


@dataclass
class FramedIsomorphism:
    """ψ̃ at sample points: ``matrices[k]`` maps the ν-frame at ``points[k]`` to the frame at ``images[k]``."""

    embedding: TubularEmbedding
    points: list
    images: list
    matrices: list
    tangents: list
    report: Report
    jet: object = None

    def invertible(self, tol=1e-12):
        return all(abs(np.linalg.det(m)) > tol for m in self.matrices)


def _deformed_generator(E: AnchoredBundle, dc: DeformationChart, w: DSection):
    """−M_w for the transport of pairs (ξ, v) along the W-flow."""
    D = dc.defchart
    r = E.rank
    nz = D.dim
    q = r + nz
    kap = dc.kappa()
    G = [[None for _ in range(q)] for _ in range(q)]
    if E.structure:
        for k in range(r):
            for j in range(r):
                acc = Poly(D)
                for i in range(r):
                    c = E.c(k, i, j)
                    if c and w.xi[i]:
                        acc = acc + kap.pull_scalar(c) * w.xi[i]
                if acc:
                    G[k][j] = -acc
    for k in range(r):
        for l in range(nz):
            d = w.xi[k].diff(l)
            if d:
                G[k][r + l] = d
    for a in range(nz):
        for l in range(nz):
            d = w.vec.comps[a].diff(l)
            if d:
                G[r + a][r + l] = d
    return G


def _nu_frame(E: AnchoredBundle, K, dc: DeformationChart, v):
    """Initial pairs (ξ0, v0) for the ν(E) frame at a normal-chart point v."""
    chart = E.chart
    r = E.rank
    nz = dc.defchart.dim
    base_pt = np.array([v[i] if c in chart.transverse else 0.0 for i, c in enumerate(chart.coords)])
    rho = E.anchor_matrix(base_pt)
    cols = []
    for kv in K:
        xi = np.array([float(c) for c in kv])
        vec = np.zeros(nz)
        img = rho @ xi
        for i in chart.transverse_indices():
            vec[i] = img[i]
        cols.append(np.concatenate([xi, vec]))
    for i in chart.normal_indices():
        vec = np.zeros(nz)
        vec[i] = 1.0
        cols.append(np.concatenate([np.zeros(r), vec]))
    return np.column_stack(cols)


def splitting_iso(E: AnchoredBundle, sigma, samples, tol=1e-6, flow_tol=DEFAULT_TOL, box=DEFAULT_BOX,
                  order=4, check_brackets=None, dc=None) -> FramedIsomorphism:
    """ψ̃: ν(E) → E over ψ at sample points, with its verification residuals."""
    chart = E.chart
    dc = dc or DeformationChart(chart)
    rep = Report("split-anchored")
    sigma = E.section(sigma)
    X = E.anchor_of(sigma)
    er = euler_like_check(X)
    if not er:
        raise NotEulerLike(str(er.witness))
    nuE, K = anchored_pullback(E, "p", dc)
    w = w_section(E, sigma, dc)
    psi = TubularEmbedding(X, dc, order=order, tol=flow_tol, box=box)
    jac_ok = E.jacobi_residual() == 0 and E.anchor_compatibility_residual() == 0
    if check_brackets is None:
        check_brackets = jac_ok
    if check_brackets and not jac_ok:
        raise SymbolicError("bracket preservation is only asserted when the Jacobi residual vanishes")
    G = _deformed_generator(E, dc, w)
    r = E.rank
    engine = TransportEngine(dc, w.vec, G, r, tol=flow_tol, box=box, sensitivities=check_brackets)
    nz = dc.defchart.dim
    n = chart.dim
    points, images, mats, tangents = [], [], [], []
    anchor_res, euler_res, inv_res, brk_res, wit = [], [], [], [], []
    for v in samples:
        v = np.asarray(v, dtype=float)
        z0 = np.concatenate([v, [0.0]])
        Y0 = _nu_frame(E, K, dc, v)
        if check_brackets:
            dz0 = np.zeros((nz, n))
            dz0[:n, :n] = np.eye(n)
            dY0 = _nu_frame_derivative(E, K, dc, v)
            z1, Y1, dz1, dY1 = engine.run(z0, Y0, dz0, dY0)
        else:
            z1, Y1 = engine.run(z0, Y0)
        P = Y1[:r, :]
        p, T = psi.with_tangent(v)
        points.append(v)
        images.append(p)
        mats.append(P)
        tangents.append(T)
        wit.append(f"v={tuple(round(float(a), 6) for a in v)}")
        rho_nu = nuE.anchor_matrix(v)
        anchor_res.append(float(np.max(np.abs(E.anchor_matrix(p) @ P - T @ rho_nu))))
        eps = np.zeros(r)
        m = len(K)
        for j, i in enumerate(chart.normal_indices()):
            eps[m + j] = v[i]
        sig = np.array([f.evaluate(p) for f in sigma])
        euler_res.append(float(np.max(np.abs(P @ eps - sig))))
        inv_res.append(1.0 / max(abs(np.linalg.det(P)), 1e-300))
        if check_brackets:
            brk_res.append(_bracket_defect(E, nuE, v, p, T, P, dY1[:r, :, :]))
    rep.add_max("anchor_intertwining", anchor_res, tol, wit)
    rep.add_max("euler_section_pullback", euler_res, tol, wit)
    rep.add_max("inverse_determinant", inv_res, 1e12, wit)
    if check_brackets:
        rep.add_max("bracket_preservation", brk_res, tol, wit)
    else:
        rep.skipped.append("bracket_preservation")
    rep.artifacts["sigma"] = [str(f) for f in sigma]
    rep.artifacts["nu_frame_kernel"] = [[str(c) for c in k] for k in K]
    rep.artifacts["psi_jet"] = [str(c) for c in psi.jet.comps]
    rep.artifacts["jet_order"] = order
    return FramedIsomorphism(psi, points, images, mats, tangents, rep)


def _nu_frame_derivative(E, K, dc, v, h=None):
    """∂/∂v of the initial ν(E) frame (only the x-dependence of the anchor enters)."""
    chart = E.chart
    n = chart.dim
    r = E.rank
    nz = dc.defchart.dim
    out = np.zeros((r + nz, r, n))
    base_pt = np.array([v[i] if c in chart.transverse else 0.0 for i, c in enumerate(chart.coords)])
    for l in chart.transverse_indices():
        dA = np.array([[e.diff(l).evaluate(base_pt) for e in row] for row in E.anchor])
        for a, kv in enumerate(K):
            img = dA @ np.array([float(c) for c in kv])
            for i in chart.transverse_indices():
                out[r + i, a, l] = img[i]
    return out


def _bracket_defect(E, nuE, v, p, T, P, dP):
    """max |[f_a, f_b](ψ(v)) − ψ̃([e_a, e_b])| for f_a = ψ̃(e_a)∘ψ^{-1}."""
    r = E.rank
    Tinv = np.linalg.inv(T)
    dF = np.einsum("kal,lm->kam", dP, Tinv)
    rho = E.anchor_matrix(p)
    C = np.zeros((r, r, r))
    for (k, i, j), f in E.structure.items():
        val = f.evaluate(p)
        C[k, i, j] = val
        C[k, j, i] = -val
    Cnu = np.zeros((r, r, r))
    for (k, i, j), f in nuE.structure.items():
        val = f.evaluate(v)
        Cnu[k, i, j] = val
        Cnu[k, j, i] = -val
    worst = 0.0
    for a in range(r):
        for b in range(a + 1, r):
            fa, fb = P[:, a], P[:, b]
            lhs = np.einsum("kij,i,j->k", C, fa, fb) + dF[:, b, :] @ (rho @ fa) - dF[:, a, :] @ (rho @ fb)
            rhs = P @ Cnu[:, a, b]
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst
