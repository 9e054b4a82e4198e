"""Manin triples, their Poisson structures, the Weinstein normal form and Moser's method.

Matrix convention for bivectors: Π[j][i] = π^{ij}, so π♯ξ = Π ξ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la
from .courant import CourantData, _quad_omega, dirac_check, homogeneity_integral
from .defspace import DeformationChart
from .eulerflow import (
    DEFAULT_BOX,
    NotEulerLike,
    TubularEmbedding,
    euler_like_check,
    fit_linear_combination,
)
from .report import Report
from .symcore import Chart, Poly, SymbolicError
from .tensorcalc import DiffForm, MultiVector, VectorField, exterior_derivative, pullback, schouten_bracket, sharp

__all__ = [
    "NotCosymplectic",
    "TransversalityLost",
    "MoserPrecondition",
    "ManinTriple",
    "PoissonStructure",
    "poisson_sharp",
    "poisson_matrix",
    "cosymplectic_check",
    "fit_alpha",
    "weinstein_normal_form",
    "moser_manin",
]


class NotCosymplectic(SymbolicError):
    pass


class TransversalityLost(RuntimeError):
    def __init__(self, s, point, det):
        super().__init__(f"F_s lost transversality to E at s={s:.6g}, point {np.round(point, 6)} (det {det:.3e})")
        self.s = s
        self.point = point


class MoserPrecondition(SymbolicError):
    pass


@dataclass
class PoissonStructure:
    chart: Chart
    pi: MultiVector

    def __post_init__(self):
        if self.pi.degree != 2:
            raise SymbolicError("a Poisson structure is a bivector")
        br = schouten_bracket(self.pi, self.pi)
        if br:
            raise SymbolicError(f"[pi, pi] = {br} is not zero")

    def matrix(self, point):
        return poisson_matrix(self.pi, point)

    def sharp(self, alpha):
        return sharp(self.pi, alpha)


def poisson_matrix(pi: MultiVector, point):
    """Π with Π[j][i] = π^{ij} at ``point``."""
    return np.asarray(pi.evaluate(point)).T


@dataclass
class ManinTriple:
    """Courant algebroid A with transverse Dirac frames E and F."""

    A: CourantData
    E: list
    F: list

    def __post_init__(self):
        self.E = [self.A.section(s) for s in self.E]
        self.F = [self.A.section(s) for s in self.F]
        if len(self.E) + len(self.F) != self.A.rank:
            raise SymbolicError("E and F must have half rank each")

    @classmethod
    def poisson(cls, pi: MultiVector):
        """(TM ⊕ T*M, TM, Gr(π)) for a bivector π."""
        chart = pi.chart
        A = CourantData.exact(chart)
        n = chart.dim
        E = [A.frame(i) for i in range(n)]
        F = []
        for i in range(n):
            vec = [pi.component((i, j)) for j in range(n)]
            form = [Poly.constant(chart, int(i == j)) for j in range(n)]
            F.append(tuple(vec + form))
        return cls(A, E, F)

    def check(self, samples, tol=1e-8) -> Report:
        rep = Report("manin-triple")
        rep.merge(dirac_check(self.A, self.E, samples, tol), "E.")
        rep.merge(dirac_check(self.A, self.F, samples, tol), "F.")
        worst, wit = [], []
        for p in samples:
            M = np.array([[f.evaluate(p) for f in s] for s in self.E + self.F]).T
            worst.append(1.0 / max(np.linalg.svd(M, compute_uv=False)[-1], 1e-300))
            wit.append(f"p={tuple(round(float(x), 6) for x in p)}")
        rep.add_max("transversality", worst, 1e10, wit)
        return rep

    def matrices(self, point):
        """(ρE, ρF, β = Eᵀ g F) at ``point``."""
        A = self.A
        rho = A.anchor_matrix(point)
        Em = np.array([[f.evaluate(point) for f in s] for s in self.E]).T
        Fm = np.array([[f.evaluate(point) for f in s] for s in self.F]).T
        return rho @ Em, rho @ Fm, Em.T @ A.g_array() @ Fm


def poisson_sharp(T: ManinTriple, point):
    """π♯ = a_F ∘ (E* ≅ F) ∘ a_E* at a point, as the matrix Π."""
    rE, rF, beta = T.matrices(point)
    if abs(np.linalg.det(beta)) < 1e-12:
        raise SymbolicError(f"E and F are not transverse at {np.round(point, 6)}")
    return rF @ np.linalg.solve(beta, rE.T)


def cosymplectic_check(pi: MultiVector, samples, floor=1e-8) -> Report:
    """ν* → T*M|_N → TM|_N → ν invertible: normal-normal block of Π at points of N."""
    chart = pi.chart
    rep = Report("cosymplectic")
    idx = chart.normal_indices()
    vals, dets, wit = [], [], []
    for x in samples:
        p = np.zeros(chart.dim)
        for i, v in zip(chart.transverse_indices(), np.atleast_1d(x)):
            p[i] = v
        B = poisson_matrix(pi, p)[np.ix_(idx, idx)]
        d = float(np.linalg.det(B)) if idx else 1.0
        dets.append(d)
        vals.append(1.0 / max(abs(d), 1e-300))
        wit.append(f"p={tuple(round(float(v), 6) for v in p)}")
    rep.add_max("inverse_normal_determinant", vals, 1.0 / floor, wit)
    rep.artifacts["min_abs_determinant"] = min(abs(d) for d in dets) if dets else None
    return rep


def fit_alpha(pi: MultiVector, grid, degree=1, max_den=1000) -> DiffForm:
    """1-form α = Σ h_i dx^i with α|_N = 0 and π♯α Euler-like, re-verified exactly."""
    chart = pi.chart
    n = chart.dim
    cols = [[pi.component((i, j)) for j in range(n)] for i in range(n)]
    coeffs = fit_linear_combination(cols, chart, 0, grid, degree=degree, max_den=max_den)
    alpha = DiffForm(chart, 1, {(i,): h for i, h in enumerate(coeffs)})
    rep = euler_like_check(sharp(pi, alpha))
    if not rep:
        raise NotEulerLike(f"fitted 1-form fails after rounding: {rep.witness}")
    return alpha


def _model_poisson(PiN, Om, dc: DeformationChart):
    """Poisson matrix of (ν(A), ν(E), R_ω(ν(F))) at one point from the dense ω matrix."""
    V = dc.nuchart
    n = V.dim
    xs = list(dc.transverse_indices)
    ys = list(dc.normal_indices)
    Vm = np.zeros((n, n))
    Lm = np.zeros((n, n))
    col = 0
    for a, i in enumerate(xs):
        v = np.zeros(n)
        v[xs] = PiN[:, a]
        lam = np.zeros(n)
        lam[i] = 1.0
        Vm[:, col], Lm[:, col] = v, lam + Om.T @ v
        col += 1
    for j in ys:
        v = np.zeros(n)
        v[j] = 1.0
        Vm[:, col], Lm[:, col] = v, Om.T @ v
        col += 1
    sv = np.linalg.svd(Lm, compute_uv=False)
    return Vm @ np.linalg.inv(Lm), float(sv[-1])


def _transverse_poisson(Pi, xs, ys):
    """Π_N = Πxx − Πxy Πyy^{-1} Πyx."""
    Pxx = Pi[np.ix_(xs, xs)]
    if not ys:
        return Pxx
    return Pxx - Pi[np.ix_(xs, ys)] @ np.linalg.solve(Pi[np.ix_(ys, ys)], Pi[np.ix_(ys, xs)])


def weinstein_normal_form(pi: MultiVector, samples, alpha: DiffForm = None, grid=None, order=4, tol=1e-6,
                          flow_tol=1e-11, box=DEFAULT_BOX, quad_nodes=12, dc=None) -> Report:
    """Normal form of a Poisson structure near a cosymplectic transversal N.

    ψ comes from X = π♯α; the model Poisson structure on the normal chart
    is that of (ν(A), ν(E), R_ω(ν(F))) with ω = d ∫_0^1 u^{-1} m_u^* ψ^*α du.
    """
    chart = pi.chart
    PoissonStructure(chart, pi)
    dc = dc or DeformationChart(chart)
    rep = Report("weinstein")
    if alpha is None:
        if grid is None:
            raise SymbolicError("need either alpha or a grid along N to fit one")
        alpha = fit_alpha(pi, grid)
    zero = {y: 0 for y in chart.normal}
    if any(f.restrict(zero) for f in alpha.comps.values()):
        raise SymbolicError("alpha must vanish along N")
    X = sharp(pi, alpha)
    er = euler_like_check(X)
    if not er:
        raise NotEulerLike(str(er.witness))
    # σ = −a_F*α ∈ Γ(E) and τ = a_E*α ∈ Γ(F) for (E, F) = (TM, Gr π)
    T = ManinTriple.poisson(pi)
    A = T.A
    sigma = A.exact_section(X, None)
    tau = A.exact_section(X, alpha)
    diff = [a - b for a, b in zip(tau, sigma)]
    ident = sum(1 for a, b in zip(diff, A.a_star(alpha)) if a != b)
    ident += sum(1 for f in (A.anchor_of(sigma) - X).comps if f)
    ident += sum(1 for f in (A.anchor_of(tau) - X).comps if f)
    rep.add("section_identities", float(ident), 0.0)
    cs = cosymplectic_check(pi, [tuple(np.asarray(v, float)[list(chart.transverse_indices())]) for v in samples])
    if cs.failures():
        raise NotCosymplectic(f"N is not cosymplectic: {cs.failures()[0].witness}")
    psi = TubularEmbedding(X, dc, order=order, tol=flow_tol, box=box)
    da = exterior_derivative(alpha)
    xs = list(dc.transverse_indices)
    ys = list(dc.normal_indices)
    mixed, fiber, model, transv, wit = [], [], [], [], []
    for v in samples:
        v = np.asarray(v, float)
        p, Tm = psi.with_tangent(v)
        Ti = np.linalg.inv(Tm)
        pull = Ti @ poisson_matrix(pi, p) @ Ti.T
        base = np.array([v[i] if i in xs else 0.0 for i in range(chart.dim)])
        PiN = _transverse_poisson(poisson_matrix(pi, base), xs, ys)
        Om = _quad_omega(psi, da, dc, v, quad_nodes)
        Pm, smin = _model_poisson(PiN, Om, dc)
        transv.append(1.0 / max(smin, 1e-300))
        model.append(float(np.max(np.abs(pull - Pm))))
        mixed.append(float(np.max(np.abs(pull[np.ix_(xs, ys)]))) if xs and ys else 0.0)
        fiber.append(float(np.max(np.abs(pull[np.ix_(xs, xs)] - PiN))) if xs else 0.0)
        wit.append(f"v={tuple(round(float(a), 6) for a in v)}")
    rep.add_max("model_transversality", transv, 1e10, wit)
    rep.add_max("model_poisson", model, tol, wit)
    rep.add_max("mixed_block", mixed, tol, wit)
    rep.add_max("transverse_block_fiber_independence", fiber, tol, wit)
    V = dc.nuchart
    beta = pullback(psi.jet, alpha, trunc=(dc.weights(V), order))
    omega = exterior_derivative(homogeneity_integral(beta, dc))
    trunc = max(float(np.max(np.abs(omega.evaluate(v) - _quad_omega(psi, da, dc, v, quad_nodes))))
                for v in samples[: min(len(samples), 5)])
    rep.artifacts["alpha"] = str(alpha)
    rep.artifacts["euler_field"] = str(X)
    rep.artifacts["sigma"] = str(X)
    rep.artifacts["tau"] = f"{X} + {alpha}"
    rep.artifacts["psi_jet"] = [str(c) for c in psi.jet.comps]
    rep.artifacts["omega_jet"] = str(omega)
    rep.artifacts["omega_jet_truncation"] = trunc
    rep.artifacts["jet_order"] = order
    return rep


# Moser's method for (TM ⊕ T*M, TM, R_{ν_s}(Gr π0))


def _with_s(chart: Chart, s_name="s"):
    while s_name in chart.coords:
        s_name += "_"
    return Chart(chart.name + "[s]", list(chart.coords) + [s_name], invertible=chart.invertible), s_name


def _spatial_d(form: DiffForm, s_index):
    d = exterior_derivative(form)
    return DiffForm(form.chart, d.degree, {k: v for k, v in d.comps.items() if s_index not in k})


@dataclass
class _Family:
    chart: Chart
    n: int
    nu: DiffForm
    alpha: DiffForm
    dnu: list = field(default_factory=list)
    dalpha: DiffForm = None
    grad_alpha: list = field(default_factory=list)

    def at(self, x, s):
        return np.concatenate([np.asarray(x, float), [s]])


def moser_manin(pi0: MultiVector, nu_s, alpha_s, samples, s_max=1.0, steps=64, tol=1e-6, s_name="s") -> Report:
    """Moser flow for F_s = R_{ν_s}(Gr π0) inside TM ⊕ T*M with E = TM.

    ``nu_s`` and ``alpha_s`` are forms on the chart extended by the
    parameter ``s`` (no ds components). Requires ν_0 = 0 and
    dν_s/ds = −dα_s exactly. σ_s = π_s♯α_s generates the flow ρ_s; the
    check is that Tρ_s carries F_0 onto F_s, i.e. φ̃_s(F_s) = F_0 with φ_s = ρ_s^{-1}.
    """
    chart = pi0.chart
    PoissonStructure(chart, pi0)
    S = nu_s.chart
    if S != alpha_s.chart or S.coords[:-1] != chart.coords:
        raise MoserPrecondition("families must live on the chart extended by the parameter")
    si = S.dim - 1
    if any(si in k for k in list(nu_s.comps) + list(alpha_s.comps)):
        raise MoserPrecondition("families must not contain d(s) components")
    at0 = {S.coords[si]: 0}
    nz = [k for k, f in nu_s.comps.items() if f.restrict(at0)]
    if nz:
        raise MoserPrecondition(f"nu_0 is not zero (components {nz})")
    dnu_ds = DiffForm(S, 2, {k: f.diff(si) for k, f in nu_s.comps.items()})
    gate = dnu_ds + _spatial_d(alpha_s, si)
    if gate:
        raise MoserPrecondition(f"d(nu_s)/ds + d(alpha_s) = {gate} is not zero")
    n = chart.dim
    rep = Report("moser")

    def lift(f):
        return Poly(S, dict(f.with_chart(S).terms)) if f.chart != S else f

    P0sym = [[lift(pi0.component((i, j))) for i in range(n)] for j in range(n)]
    dP0sym = [[[P0sym[a][b].diff(c) for b in range(n)] for a in range(n)] for c in range(n)]
    dalpha = _spatial_d(alpha_s, si)

    def ev(z):
        """(X, DX, Π, ν, dβ) at the extended point z = (x, s)."""
        P0 = np.array([[e.evaluate(z) for e in row] for row in P0sym])
        dP0 = np.array([[[e.evaluate(z) for e in row] for row in M] for M in dP0sym])
        N = np.asarray(nu_s.evaluate(z))[:n, :n]
        dN = np.array([[[nu_s.component((a, b)).diff(c).evaluate(z) for b in range(n)] for a in range(n)]
                       for c in range(n)])
        al = np.array([alpha_s.component((i,)).evaluate(z) for i in range(n)])
        dal = np.array([[alpha_s.component((i,)).diff(c).evaluate(z) for i in range(n)] for c in range(n)])
        L = np.eye(n) + N.T @ P0
        det = np.linalg.det(L)
        if abs(det) < 1e-10:
            raise TransversalityLost(z[-1], z[:-1], det)
        Li = np.linalg.inv(L)
        Pi = P0 @ Li
        X = Pi @ al
        DX = np.zeros((n, n))
        for c in range(n):
            dL = dN[c].T @ P0 + N.T @ dP0[c]
            dPi = dP0[c] @ Li - P0 @ Li @ dL @ Li
            DX[:, c] = dPi @ al + Pi @ dal[c]
        LX = np.einsum("c,cab->ab", X, dN) + DX.T @ N + N @ DX
        dB = np.asarray(dalpha.evaluate(z))[:n, :n] - LX
        return X, DX, Pi, N, dB, L, al

    def rhs(s, y):
        x = y[:n]
        J = y[n:n + n * n].reshape(n, n)
        X, DX, _, _, dB, _, _ = ev(np.concatenate([x, [s]]))
        return np.concatenate([X, (DX @ J).ravel(), (-(J.T @ dB @ J)).ravel()])

    checkpoints = sorted({s_max / 2.0, s_max})
    sub, decomp, book, wit = [], [], [], []
    for m in samples:
        m = np.asarray(m, float)
        y = np.concatenate([m, np.eye(n).ravel(), np.zeros(n * n)])
        s = 0.0
        h = s_max / steps
        for k in range(steps):
            k1 = rhs(s, y)
            k2 = rhs(s + h / 2, y + h / 2 * k1)
            k3 = rhs(s + h / 2, y + h / 2 * k2)
            k4 = rhs(s + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            s = (k + 1) * h
            if any(abs(s - c) < 1e-12 for c in checkpoints):
                x = y[:n]
                J = y[n:n + n * n].reshape(n, n)
                Wb = y[n + n * n:].reshape(n, n)
                z = np.concatenate([x, [s]])
                X, _, Pi, N, _, L, al = ev(z)
                z0 = np.concatenate([m, [0.0]])
                P00 = np.array([[e.evaluate(z0) for e in row] for row in P0sym])
                img = np.vstack([J @ P00, np.linalg.solve(J.T, np.eye(n))])
                target = np.vstack([Pi @ L, L])
                sub.append(_angle(img, target))
                # σ_s as the E-component of −a*(α_s) relative to E ⊕ F_s
                B = np.block([[np.eye(n), Pi @ L], [np.zeros((n, n)), L]])
                c = np.linalg.solve(B, np.concatenate([np.zeros(n), -al]))
                decomp.append(float(np.max(np.abs(c[:n] - X))))
                book.append(float(np.max(np.abs(J.T @ N @ J - Wb))))
                wit.append(f"m={tuple(round(float(v), 6) for v in m)}, s={s:g}")
    rep.add_max("subspace_transport", sub, tol, wit)
    rep.add_max("sigma_decomposition", decomp, 1e-9, wit)
    rep.add_max("varpi_bookkeeping", book, tol, wit)
    rep.artifacts["steps"] = steps
    rep.artifacts["s_max"] = s_max
    rep.artifacts["checkpoints"] = checkpoints
    return rep


def _angle(A, B):
    from scipy.linalg import subspace_angles

    ang = subspace_angles(A, B)
    return float(np.max(np.sin(ang))) if len(ang) else 0.0
