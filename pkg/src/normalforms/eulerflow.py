"""Euler-like vector fields, the field W, flows and tubular embeddings.

Sign convention: the integrator solves dz/ds = +X(z). The geometric flow
φ_s^X used throughout the constructions is the flow of −X (so the flow of
∂/∂t moves t to t − s); call sites that need it negate the duration.
Accordingly ψ = κ∘φ_{−1}∘j integrates W forward for unit time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import orth, subspace_angles

from .defspace import DeformationChart, NotTangentToN, canonical_fields, lift_vector_tangent
from .kernels import PackedSystem
from .report import Report
from .symcore import Chart, NotDivisible, Poly, SymbolicError, substitute
from .tensorcalc import PolyMap, VectorField, lie_bracket

__all__ = [
    "NotEulerLike",
    "NotInvolutive",
    "FitFailed",
    "FlowError",
    "StepUnderflow",
    "LeftChart",
    "EulerReport",
    "FlowResult",
    "TubularEmbedding",
    "euler_like_check",
    "require_euler_like",
    "w_field",
    "flow_numeric",
    "w_flow_explicit",
    "tubular_embedding",
    "augmented_system",
    "jet_transport",
    "fit_linear_combination",
    "foliation_split_verify",
    "span_residual",
]

DEFAULT_TOL = 1e-10
DEFAULT_BOX = 10.0


class NotEulerLike(SymbolicError):
    pass


class NotInvolutive(SymbolicError):
    def __init__(self, point, pair, residual):
        self.point = point
        self.pair = pair
        self.residual = residual
        super().__init__(
            f"bracket of generators {pair} leaves their span at {tuple(round(p, 6) for p in point)}"
            f" (residual {residual:.3e})"
        )


class FitFailed(SymbolicError):
    pass


class FlowError(RuntimeError):
    pass


class StepUnderflow(FlowError):
    pass


class LeftChart(FlowError):
    pass


@dataclass
class EulerReport:
    is_euler_like: bool
    witness: object
    a: tuple = ()
    b: tuple = ()

    def __bool__(self):
        return self.is_euler_like


def euler_like_check(X: VectorField, chart: Chart = None) -> EulerReport:
    """Decide exactly whether X = Σ a_i ∂x_i + Σ (y_j + b_j) ∂y_j is Euler-like.

    Requires every a_i to vanish on N (y-degree ≥ 1 in each term) and every
    b_j to vanish to second order (y-degree ≥ 2 in each term).
    """
    chart = chart or X.chart
    if not chart.is_submanifold_chart:
        return EulerReport(False, f"chart {chart.name!r} has no normal block")
    normal = chart.normal
    a, b = [], []
    for name in chart.transverse:
        ai = X[name]
        a.append(ai)
        low = ai.min_degree(normal)
        if low < 1:
            bad = [e for e in ai.terms if sum(e[chart.index(n)] for n in normal) < 1][0]
            term = Poly.monomial(chart, bad, ai.terms[bad])
            return EulerReport(False, f"component along {name} does not vanish on N: term {term}", tuple(a))
    for name in normal:
        bj = X[name] - chart.var(name)
        b.append(bj)
        low = bj.min_degree(normal)
        if low < 2:
            bad = [e for e in bj.terms if sum(e[chart.index(n)] for n in normal) < 2][0]
            term = Poly.monomial(chart, bad, bj.terms[bad])
            return EulerReport(
                False,
                f"linear part along {name} differs from the Euler field: term {term} of X({name}) - {name}",
                tuple(a),
                tuple(b),
            )
    return EulerReport(True, {"a": [str(p) for p in a], "b": [str(p) for p in b]}, tuple(a), tuple(b))


def require_euler_like(X: VectorField):
    rep = euler_like_check(X)
    if not rep:
        raise NotEulerLike(str(rep.witness))
    return rep


def w_field(X: VectorField, dc: DeformationChart) -> VectorField:
    """W = (D(X) + Θ)/t, with every division performed exactly."""
    require_euler_like(X)
    theta, _ = canonical_fields(dc)
    try:
        dx = lift_vector_tangent(X, dc)
        total = dx + theta
        return VectorField(dc.defchart, [c.exact_divide(dc.t) if c else c for c in total.comps])
    except (NotDivisible, NotTangentToN) as exc:
        raise NotEulerLike(str(exc)) from None


@dataclass
class FlowResult:
    endpoint: np.ndarray
    error_estimate: float
    steps: int


def _run(system: PackedSystem, start, s, tol, box, nbox=None):
    z, steps, err, status, reached = system.integrate(start, s, rtol=tol, atol=tol, box=box, nbox=nbox)
    if status == 1:
        raise StepUnderflow(f"step size underflow at s={reached:.6g} (state {np.round(z[:nbox or len(z)], 6)})")
    if status == 2:
        raise LeftChart(f"trajectory left the chart box |z| <= {box} at s={reached:.6g}")
    if status == 3:
        raise FlowError(f"step budget exhausted at s={reached:.6g}")
    return FlowResult(np.asarray(z), err, steps)


def flow_numeric(X: VectorField, start, s, tol=DEFAULT_TOL, box=DEFAULT_BOX) -> FlowResult:
    """Integrate dz/ds = X(z) from ``start`` for duration ``s``."""
    return _run(PackedSystem(X.comps, X.chart), start, s, tol, box)


def w_flow_explicit(X: VectorField, m, t, s, tol=DEFAULT_TOL, box=DEFAULT_BOX):
    """Geometric flow of W for time s from (m, t), t ≠ 0, in base coordinates.

    Returns (φ^X_τ(m), t − s) with τ = −log(1 − s/t), computed by integrating
    the underlying field for duration −τ.
    """
    t = float(t)
    if t == 0 or s / t >= 1:
        raise ValueError("explicit W-flow needs t != 0 and s/t < 1")
    tau = -math.log(1.0 - s / t)
    res = flow_numeric(X, m, -tau, tol, box)
    return res.endpoint, t - s


def augmented_system(chart: Chart, field, blocks=(), prefix="w"):
    """Pack dz/du = F(z) together with linear blocks dw/du = M(z) w.

    ``blocks`` is a sequence of (M, ncols) with M an m×m matrix of
    polynomials on ``chart`` (None for zero entries). The state is z
    followed by each block's columns, column by column.
    """
    names = list(chart.coords)
    extra = []
    for b, (M, ncols) in enumerate(blocks):
        m = len(M)
        for c in range(ncols):
            for k in range(m):
                extra.append(f"{prefix}{b}_{c}_{k}")
    big = Chart(chart.name + "+", names + extra, invertible=chart.invertible)
    polys = [f.with_chart(big) for f in field]
    pos = 0
    for b, (M, ncols) in enumerate(blocks):
        m = len(M)
        lifted = [[(e.with_chart(big) if e else None) for e in row] for row in M]
        for c in range(ncols):
            wv = [big.var(f"{prefix}{b}_{c}_{k}") for k in range(m)]
            for k in range(m):
                acc = Poly(big)
                for l in range(m):
                    if lifted[k][l] is not None:
                        acc = acc + lifted[k][l] * wv[l]
                polys.append(acc)
        pos += m * ncols
    return PackedSystem(polys, big)


def _integrate_s(p: Poly, s_index: int) -> Poly:
    out = {}
    for e, c in p.terms.items():
        e2 = list(e)
        e2[s_index] += 1
        out[tuple(e2)] = c / e2[s_index]
    return Poly(p.chart, out)


def jet_transport(W: VectorField, dc: DeformationChart, order: int):
    """Order-K Taylor transport of the W-flow from the zero fiber.

    Returns polynomials in (x, ỹ, s) on an auxiliary chart giving the
    solution of dz/ds = W(z), z(0) = (x, ỹ, 0), truncated at degree
    ``order`` in ỹ.
    """
    V = dc.nuchart
    s_name = "s"
    while s_name in V.coords:
        s_name += "_"
    J = Chart(f"jet({V.name})", list(V.coords) + [s_name], invertible=V.invertible)
    s = J.var(s_name)
    s_idx = J.index(s_name)
    weights = {c: int(c in dc.untilde) for c in J.coords}
    trunc = (weights, order)
    start = [J.var(c) for c in V.coords]
    cur = list(start)
    D = dc.defchart
    for _ in range(2 * order + 4):
        assignment = {c: cur[i] for i, c in enumerate(V.coords)}
        assignment[dc.t] = s
        new = []
        for i, c in enumerate(V.coords):
            rhs = substitute(W.comps[D.index(c)], assignment, target=J, trunc=trunc)
            new.append(start[i] + _integrate_s(rhs, s_idx))
        if new == cur:
            break
        cur = new
    else:
        raise FlowError("Taylor transport did not stabilize")
    return J, s_name, cur


class TubularEmbedding:
    """ψ: normal bundle chart → base chart determined by an Euler-like field."""

    def __init__(self, X: VectorField, dc: DeformationChart, order=4, tol=DEFAULT_TOL, box=DEFAULT_BOX):
        self.X = X
        self.dc = dc
        self.tol = tol
        self.box = box
        self.order = order
        self.W = w_field(X, dc)
        D = dc.defchart
        self._flow = PackedSystem(self.W.comps, D)
        jac = self.W.jacobian()
        self._var = augmented_system(D, self.W.comps, [(jac, D.dim - 1)])
        self._jet = None

    @property
    def jet(self) -> PolyMap:
        if self._jet is None:
            J, s_name, sol = jet_transport(self.W, self.dc, self.order)
            V = self.dc.nuchart
            comps = [substitute(p, {**{c: V.var(c) for c in V.coords}, s_name: Poly.constant(V, 1)}, target=V)
                     for p in sol]
            self._jet = PolyMap(V, self.dc.base, comps, order=self.order)
        return self._jet

    def start(self, v):
        return np.concatenate([np.asarray(v, dtype=float), [0.0]])

    def kappa_point(self, z):
        """κ at a deformation-chart point z = (x, ỹ, t)."""
        dc = self.dc
        out = np.array(z[: dc.t_index], dtype=float)
        out[list(dc.normal_indices)] *= z[dc.t_index]
        return out

    def kappa_jacobian(self, z):
        dc = self.dc
        n = dc.t_index
        K = np.zeros((n, n + 1))
        t = z[n]
        for i in range(n):
            K[i, i] = 1.0
        for i in dc.normal_indices:
            K[i, i] = t
            K[i, n] = z[i]
        return K

    def flow_W(self, z0, s):
        """Integrate W for duration s (geometric flow φ_{−s})."""
        return _run(self._flow, z0, s, self.tol, self.box, nbox=len(z0)).endpoint

    def __call__(self, v):
        z = self.flow_W(self.start(v), 1.0)
        return self.kappa_point(z)

    def with_tangent(self, v):
        """(ψ(v), Tψ(v)) via the variational equation along the W-flow."""
        n = self.dc.t_index
        z0 = self.start(v)
        V0 = np.zeros((n + 1, n))
        V0[:n, :n] = np.eye(n)
        state = np.concatenate([z0, V0.T.ravel()])
        z = _run(self._var, state, 1.0, self.tol, self.box, nbox=n + 1).endpoint
        zt = z[: n + 1]
        V = z[n + 1:].reshape(n, n + 1).T
        return self.kappa_point(zt), self.kappa_jacobian(zt) @ V

    def tangent(self, v):
        return self.with_tangent(v)[1]

    def relatedness_residual(self, v):
        """‖Tψ(E_v) − X(ψ(v))‖ for the Euler field E of the normal chart."""
        p, T = self.with_tangent(v)
        e = np.zeros(len(v))
        for i in self.dc.normal_indices:
            e[i] = v[i]
        return float(np.max(np.abs(T @ e - self.X.evaluate(p))))

    def homogeneity_residual(self, v, t):
        """‖ψ(t·v) − κ(φ_{−t}(j(v)))‖ with t·v scaling the normal part."""
        v = np.asarray(v, dtype=float)
        tv = v.copy()
        idx = list(self.dc.normal_indices)
        tv[idx] *= t
        lhs = self(tv)
        z = self.flow_W(self.start(v), t)
        rhs = self.kappa_point(z)
        return float(np.max(np.abs(lhs - rhs)))


def tubular_embedding(X: VectorField, order=4, tol=DEFAULT_TOL, box=DEFAULT_BOX, dc=None) -> TubularEmbedding:
    require_euler_like(X)
    dc = dc or DeformationChart(X.chart)
    return TubularEmbedding(X, dc, order=order, tol=tol, box=box)


# singular foliations


def _x_monomials(chart: Chart, degree: int):
    """Exponent tuples in the transverse variables, Laurent where allowed."""
    import itertools

    xs = chart.transverse_indices()
    ranges = []
    for i in xs:
        lo = -degree if chart.coords[i] in chart.invertible else 0
        ranges.append(range(lo, degree + 1))
    out = []
    for combo in itertools.product(*ranges):
        if sum(abs(k) for k in combo) <= degree:
            e = [0] * chart.dim
            for i, k in zip(xs, combo):
                e[i] = k
            out.append(tuple(e))
    return sorted(out)


def fit_linear_combination(columns, chart: Chart, n_points, grid, degree=1, max_den=1000):
    """Fit coefficients h_i = Σ_j y_j g_ij(x) so that Σ h_i col_i is Euler-like.

    ``columns`` are vectors of polynomials (one per coordinate), e.g. the
    generators of a foliation or the anchor images of a frame. The linear
    part of the normal components must reproduce the Euler field along N;
    g_ij are fitted by least squares on ``grid`` (points of N given as
    transverse coordinate tuples), rounded to rationals, and returned as
    polynomials. The caller re-verifies the result exactly.
    """
    normal = chart.normal_indices()
    mons = _x_monomials(chart, degree)
    k = len(columns)
    s = len(normal)
    nb = len(mons)
    rows, rhs = [], []
    zero_y = {chart.coords[i]: 0 for i in normal}
    restricted = [[c.restrict(zero_y) for c in col] for col in columns]
    for pt in grid:
        full = [0.0] * chart.dim
        for i, v in zip(chart.transverse_indices(), pt):
            full[i] = float(v)
        mvals = [Poly.monomial(chart, e).evaluate(full) for e in mons]
        colv = [[c.evaluate(full) for c in col] for col in restricted]
        for j in range(s):
            for kk, row_idx in enumerate(normal):
                row = np.zeros(k * s * nb)
                for i in range(k):
                    for m in range(nb):
                        row[(i * s + j) * nb + m] = colv[i][row_idx] * mvals[m]
                rows.append(row)
                rhs.append(1.0 if j == kk else 0.0)
    A = np.array(rows)
    bvec = np.array(rhs)
    sol, *_ = np.linalg.lstsq(A, bvec, rcond=None)
    resid = float(np.max(np.abs(A @ sol - bvec))) if len(bvec) else 0.0
    if resid > 1e-8:
        raise FitFailed(f"least-squares residual {resid:.3e} along N")
    coeffs = []
    for i in range(k):
        h = Poly(chart)
        for j, yi in enumerate(normal):
            for m, e in enumerate(mons):
                c = Fraction(float(sol[(i * s + j) * nb + m])).limit_denominator(max_den)
                if c:
                    h = h + Poly.monomial(chart, e, c) * chart.var(chart.coords[yi])
        coeffs.append(h)
    return coeffs


def combine(columns, coeffs, chart):
    comps = [Poly(chart)] * chart.dim
    comps = list(comps)
    for col, h in zip(columns, coeffs):
        if h:
            for i, c in enumerate(col):
                comps[i] = comps[i] + h * c
    return VectorField(chart, comps)


def _orth(M, rtol=1e-9):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0 or not np.any(M):
        return np.zeros((M.shape[0], 0))
    return orth(M, rcond=rtol)


def span_residual(A, B, rtol=1e-9):
    """Largest principal-angle sine between column spans; 1.0 if ranks differ."""
    QA, QB = _orth(A, rtol), _orth(B, rtol)
    if QA.shape[1] != QB.shape[1]:
        return 1.0
    if QA.shape[1] == 0:
        return 0.0
    return float(np.max(np.sin(subspace_angles(QA, QB))))


def _in_span(M, b, rtol=1e-9):
    Q = _orth(M, rtol)
    r = b - Q @ (Q.T @ b) if Q.shape[1] else b
    return float(np.linalg.norm(r) / max(1.0, float(np.linalg.norm(b))))


def check_involutive(generators, points, tol=1e-8):
    brackets = {}
    for i in range(len(generators)):
        for j in range(i + 1, len(generators)):
            brackets[(i, j)] = lie_bracket(generators[i], generators[j])
    worst = 0.0
    for p in points:
        G = np.column_stack([g.evaluate(p) for g in generators])
        for (i, j), br in brackets.items():
            r = _in_span(G, br.evaluate(p))
            worst = max(worst, r)
            if r > tol:
                raise NotInvolutive(tuple(float(v) for v in p), (i, j), r)
    return worst


def foliation_split_verify(generators, chart: Chart, samples, sigma_coeffs=None, grid_n=None,
                           order=4, tol=1e-6, flow_tol=DEFAULT_TOL, box=DEFAULT_BOX, fit_degree=1,
                           fit_grid=None) -> Report:
    """Compare ψ_*(ν(J)) with J at sample points of the normal bundle chart.

    This verifies the splitting at samples only; module equality of the
    generated foliations is not certified.
    """
    rep = Report("split-foliation")
    dc = DeformationChart(chart)
    samples = [np.asarray(v, dtype=float) for v in samples]
    if sigma_coeffs is None:
        if fit_grid is None:
            xs = sorted({tuple(v[i] for i in chart.transverse_indices()) for v in samples})
            fit_grid = xs
        sigma_coeffs = fit_linear_combination([g.comps for g in generators], chart, len(samples),
                                              fit_grid, degree=fit_degree)
    sigma = combine([g.comps for g in generators], sigma_coeffs, chart)
    er = euler_like_check(sigma)
    if not er:
        raise NotEulerLike(str(er.witness))
    rep.artifacts["sigma"] = str(sigma)
    rep.artifacts["sigma_coefficients"] = [str(h) for h in sigma_coeffs]
    psi = TubularEmbedding(sigma, dc, order=order, tol=flow_tol, box=box)
    images = []
    tangents = []
    for v in samples:
        p, T = psi.with_tangent(v)
        images.append(p)
        tangents.append(T)
    n_points = [np.array([v[i] if i in chart.transverse_indices() else 0.0 for i in range(chart.dim)])
                for v in samples]
    inv = check_involutive(generators, images + n_points)
    rep.add("involutivity", inv, 1e-8)
    x_idx = list(chart.transverse_indices())
    y_idx = list(chart.normal_indices())
    span_res, witnesses = [], []
    for v, p, T, q in zip(samples, images, tangents, n_points):
        G0 = np.column_stack([g.evaluate(q) for g in generators])
        Tn = np.zeros((chart.dim, len(x_idx)))
        for c, i in enumerate(x_idx):
            Tn[i, c] = 1.0
        basis = []
        if len(x_idx):
            K = np.hstack([G0, -Tn])
            from scipy.linalg import null_space

            ns = null_space(K, rcond=1e-10)
            inter = Tn @ ns[G0.shape[1]:, :] if ns.size else np.zeros((chart.dim, 0))
            for col in _orth(inter).T:
                basis.append(col)
        for i in y_idx:
            e = np.zeros(chart.dim)
            e[i] = 1.0
            basis.append(e)
        nuJ = np.column_stack(basis) if basis else np.zeros((chart.dim, 0))
        pushed = T @ nuJ
        G = np.column_stack([g.evaluate(p) for g in generators])
        span_res.append(span_residual(pushed, G))
        witnesses.append(f"v={tuple(round(float(a), 6) for a in v)}")
    rep.add_max("span_principal_angle", span_res, tol, witnesses)
    rep.artifacts["psi_jet"] = [str(c) for c in psi.jet.comps]
    rep.artifacts["jet_order"] = order
    rep.artifacts["samples"] = len(samples)
    rep.artifacts["verification"] = "verified at samples"
    return rep
