"""Local degrees of freedom and projector matrices of the lowest-order
(k = 2) enhanced divergence-free virtual element space.

Local DoFs of a cell with ``nv`` vertices, in order (``nk = 4 nv + 2``):

* ``[0, nv)``        component 1 at the vertices
* ``[nv, 2nv)``      component 1 at the edge midpoints
* ``[2nv, 3nv)``     component 2 at the vertices
* ``[3nv, 4nv)``     component 2 at the edge midpoints
* ``4nv, 4nv + 1``   ``h_K/|K| int_K div(v) m_2`` and the same against ``m_3``

Edge ``j`` runs from vertex ``j`` to vertex ``j + 1``; its midpoint DoF has
local index ``nv + j`` (component 1).
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import scipy.linalg as sla

from .polybasis import (
    MATRIX_SLOTS,
    ScaledMonomialBasis,
    edge_quadrature,
    eval_monomial_gradients,
    eval_monomials,
    monomial_derivative_coefficients,
    monomial_laplacians,
    monomial_mass,
    polygon_quadrature,
    triple_product_tensor,
    vector_monomials,
)

# values of (1, t, t^2) at t = -1/2, 1/2, 0 (start, end, midpoint of an edge)
EDGE_VANDERMONDE = np.array([[1.0, -0.5, 0.25], [1.0, 0.5, 0.25], [1.0, 0.0, 0.0]])


class SingularElementError(np.linalg.LinAlgError):
    pass


def solve_scaled(A, B, cell=None, what="system"):
    """Solve A X = B after scaling each row by its largest entry."""
    s = np.abs(A).max(axis=1)
    if np.any(s == 0):
        raise SingularElementError(f"singular {what} on cell {cell}")
    try:
        lu = sla.lu_factor(A / s[:, None], check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularElementError(f"singular {what} on cell {cell}: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(np.diag(lu[0]))):
        raise SingularElementError(f"singular {what} on cell {cell}")
    return sla.lu_solve(lu, B / s[:, None] if B.ndim == 2 else B / s)


class Element:
    """Geometry, scaled monomial bases and quadrature of one cell."""

    def __init__(self, geometry, quad_degree=6):
        self.geometry = geometry
        self.index = geometry.index
        self.nv = geometry.n_vertices
        self.nk = 4 * self.nv + 2
        self.area = geometry.area
        self.hK = geometry.diameter
        self.centroid = geometry.centroid
        self.basis = ScaledMonomialBasis(self.centroid, self.hK, 2)
        self.basis1 = ScaledMonomialBasis(self.centroid, self.hK, 1)
        self.basis3 = ScaledMonomialBasis(self.centroid, self.hK, 3)
        self.quad = polygon_quadrature(geometry, quad_degree)
        nxt = np.roll(geometry.vertices, -1, axis=0)
        self.edge_start = geometry.vertices
        self.edge_end = nxt

    # local index ranges
    def vertex_dofs(self, comp):
        return 2 * comp * self.nv + np.arange(self.nv)

    def midpoint_dofs(self, comp):
        return 2 * comp * self.nv + self.nv + np.arange(self.nv)

    @property
    def div_dofs(self):
        return 4 * self.nv, 4 * self.nv + 1

    def boundary_rows(self, ga, gb, gm, comp):
        """Simpson's rule for int_{dK} g phi_i, with g given per edge at the
        start vertex, end vertex and midpoint (arrays (nf, nv)), tested
        against the nodal boundary basis functions of component ``comp``."""
        ga, gb, gm = (np.atleast_2d(x) for x in (ga, gb, gm))
        h = self.geometry.edge_lengths
        out = np.zeros((ga.shape[0], self.nk))
        vert = self.vertex_dofs(comp)
        out[:, vert] += h / 6 * ga
        out[:, np.roll(vert, -1)] += h / 6 * gb
        out[:, self.midpoint_dofs(comp)] += 4 * h / 6 * gm
        return out


# ------------------------------------------------------------ transition


def transition_matrix(el):
    """D[i, alpha] = chi_i(m_alpha)."""
    nv = el.nv
    D = np.zeros((el.nk, 12))
    mv = eval_monomials(el.basis, el.geometry.vertices)
    mm = eval_monomials(el.basis, el.geometry.midpoints)
    D[0:nv, :6] = mv
    D[nv:2 * nv, :6] = mm
    D[2 * nv:3 * nv, 6:] = mv
    D[3 * nv:4 * nv, 6:] = mm
    D[4 * nv:] = _divergence_moments(el)
    return D


def _divergence_moments(el):
    q = el.quad
    grads = eval_monomial_gradients(el.basis, q.points)  # (n, 6, 2)
    div = np.concatenate([grads[:, :, 0], grads[:, :, 1]], axis=1)  # (n, 12)
    m = eval_monomials(el.basis1, q.points)[:, 1:3]  # m_2, m_3
    return el.hK / el.area * np.einsum("q,qa,qj->ja", q.weights, div, m)


# --------------------------------------------------------------- elliptic


@dataclass
class EllipticProjection:
    G: np.ndarray  # a^K(m, m^T)
    B: np.ndarray  # a^K(m, phi^T)
    G_tilde: np.ndarray  # rows 0 and 6 replaced by the constraint
    B_tilde: np.ndarray
    P0: np.ndarray  # (2, nk) cell averages of phi_i, per component
    pi_star: np.ndarray  # (12, nk)
    pi: np.ndarray  # (nk, nk)


def _edge_values(el, fn):
    """Evaluate fn(points, normals) at edge starts, ends and midpoints."""
    g = el.geometry
    return (
        fn(el.edge_start, g.normals),
        fn(el.edge_end, g.normals),
        fn(g.midpoints, g.normals),
    )


def constraint_rows(el):
    """P0^K(phi^T): cell averages of both components of every basis function."""
    xK, yK = el.centroid
    rows = []
    for comp, shift in ((0, xK), (1, yK)):
        # int_K phi_comp = -int_K div(phi) (x_comp - c) + int_dK (x_comp - c) phi . n
        acc = np.zeros(el.nk)
        for k in (0, 1):
            ga, gb, gm = _edge_values(el, lambda p, n: (p[:, comp] - shift) * n[:, k])
            acc += el.boundary_rows(ga, gb, gm, k)[0]
        acc /= el.area
        acc[el.div_dofs[comp]] -= 1.0
        rows.append(acc)
    return np.array(rows)


def elliptic_projector(el, D=None):
    D = transition_matrix(el) if D is None else D
    q = el.quad
    grads = eval_monomial_gradients(el.basis, q.points)
    Gs = np.einsum("q,qad,qbd->ab", q.weights, grads, grads)
    G = sla.block_diag(Gs, Gs)

    lap = monomial_laplacians(el.basis)
    xK, yK = el.centroid
    g = el.geometry
    B = np.zeros((12, el.nk))
    d2, d3 = el.div_dofs
    # gradient . n of every scalar monomial at edge start/end/mid, (nv, 6) each
    gn = [
        np.einsum("jad,jd->ja", eval_monomial_gradients(el.basis, pts), g.normals)
        for pts in (el.edge_start, el.edge_end, g.midpoints)
    ]
    for c in (0, 1):
        for a in range(6):
            alpha = 6 * c + a
            # Laplacian(m_alpha) = grad q_alpha with q_alpha linear, zero mean
            c2, c3 = (lap[a], 0.0) if c == 0 else (0.0, lap[a])
            B[alpha, d2] += el.area * c2
            B[alpha, d3] += el.area * c3
            for k in (0, 1):
                vals = []
                for pts, gnv in zip((el.edge_start, el.edge_end, g.midpoints), gn):
                    qa = c2 * (pts[:, 0] - xK) + c3 * (pts[:, 1] - yK)
                    v = -qa * g.normals[:, k]
                    if k == c:
                        v = v + gnv[:, a]
                    vals.append(v)
                B[alpha] += el.boundary_rows(*vals, k)[0]

    P0 = constraint_rows(el)
    means = eval_monomials(el.basis, q.points).T @ q.weights / el.area
    G_tilde = G.copy()
    B_tilde = B.copy()
    G_tilde[0] = np.concatenate([means, np.zeros(6)])
    G_tilde[6] = np.concatenate([np.zeros(6), means])
    B_tilde[0] = P0[0]
    B_tilde[6] = P0[1]
    pi_star = solve_scaled(G_tilde, B_tilde, el.index, "elliptic projection matrix G")
    return EllipticProjection(G, B, G_tilde, B_tilde, P0, pi_star, D @ pi_star)


# ----------------------------------------------------------------- lifting


@dataclass
class LiftingProjection:
    D_L: np.ndarray  # (nk + 3, 12)
    B_L: np.ndarray  # (12, nk + 3)
    pi_L_star: np.ndarray
    pi_L: np.ndarray  # (nk + 3, nk + 3)


def perp_moments(el, values):
    """|K|^{-1} int_K v . g_j for g_j = m_j (m_3, -m_2), j = 1..3.

    ``values`` holds vector fields at the quadrature points, (n, nf, 2)."""
    q = el.quad
    m = eval_monomials(el.basis1, q.points)
    g = np.stack([m * m[:, 2:3], -m * m[:, 1:2]], axis=2)  # (n, 3, 2)
    return np.einsum("q,qjd,qfd->jf", q.weights, g, values) / el.area


def lifting_projector(el, D, ellip):
    vec = vector_monomials(eval_monomials(el.basis, el.quad.points))
    D_L = np.vstack([D, perp_moments(el, vec)])
    B_L = np.hstack([ellip.B_tilde, np.zeros((12, 3))])
    pi_L_star = solve_scaled(ellip.G_tilde, B_L, el.index, "elliptic projection matrix G")
    return LiftingProjection(D_L, B_L, pi_L_star, D_L @ pi_L_star)


# ----------------------------------------------- divergence and edge traces


def divergence_expansion(el, H1=None):
    """Coefficients a (3, nk) of div(phi_i) in m_1, m_2, m_3, and the moment
    matrix r with r[l, i] = (m_l, div phi_i)_K."""
    H1 = monomial_mass(el.quad, el.basis1) if H1 is None else H1
    g = el.geometry
    r = np.zeros((3, el.nk))
    for k in (0, 1):
        nk_ = g.normals[:, k]
        r[0] += el.boundary_rows(nk_, nk_, nk_, k)[0]
    d2, d3 = el.div_dofs
    r[1, d2] = el.area / el.hK
    r[2, d3] = el.area / el.hK
    return np.linalg.solve(H1, r), r


def edge_trace_expansion(el, j):
    """Coefficients of phi_{1,i}|_e and phi_{2,i}|_e in (1, t, t^2), with
    t = (s - s_e)/h_e, for local edge ``j``; two arrays of shape (3, nk)."""
    out = []
    for comp in (0, 1):
        vert = el.vertex_dofs(comp)
        rhs = np.zeros((3, el.nk))
        rhs[0, vert[j]] = 1.0
        rhs[1, vert[(j + 1) % el.nv]] = 1.0
        rhs[2, el.midpoint_dofs(comp)[j]] = 1.0
        out.append(np.linalg.solve(EDGE_VANDERMONDE, rhs))
    return tuple(out)


def edge_monomial_moments(el, basis, j):
    """H^e[s, u] = int_e m_s t^u ds by 4-point Gauss-Lobatto."""
    rule = edge_quadrature(el.edge_start[j], el.edge_end[j], "gauss_lobatto_4")
    ms = eval_monomials(basis, rule.points)  # (4, ns)
    te = rule.params[:, None] ** np.arange(3)  # (4, 3)
    return np.einsum("p,ps,pu->su", rule.weights, ms, te)


# --------------------------------------------------------------------- L2


@dataclass
class L2Projection:
    H: np.ndarray  # (m, m^T)_K, 12 x 12
    C: np.ndarray  # (m, phi^T)_K, 12 x nk
    pi0_star: np.ndarray
    pi0: np.ndarray
    decomposition: np.ndarray  # 12 x 12, rows: grad m_2..m_10 then m_perp m_1..m_3
    I_grad: np.ndarray  # (9, nk)
    I_perp: np.ndarray  # (3, nk)


def decomposition_functions(el, points):
    """grad m_s for the nine non-constant cubic monomials, then m_perp m_t
    for t = 1..3, evaluated at points: (n, 12, 2)."""
    grad3 = eval_monomial_gradients(el.basis3, points)[:, 1:, :]
    m = eval_monomials(el.basis1, points)
    perp = np.stack([m * m[:, 2:3], -m * m[:, 1:2]], axis=2)
    return np.concatenate([grad3, perp], axis=1)


def l2_projector(el, D, ellip, lift, div_coeffs, traces, H1):
    q = el.quad
    psi = decomposition_functions(el, q.points)
    vec = vector_monomials(eval_monomials(el.basis, q.points))
    H_plus = np.einsum("q,qad,qbd->ab", q.weights, psi, psi)
    r_plus = np.einsum("q,qad,qbd->ab", q.weights, psi, vec)
    coef = solve_scaled(H_plus, r_plus, el.index, "polynomial decomposition matrix")

    # I_grad(s, i) = -int div(phi_i) m_s + int_dK (phi_i . n) m_s
    H13 = monomial_mass(q, el.basis3, el.basis1)  # (10, 3)
    I_grad = -H13 @ div_coeffs
    g = el.geometry
    for j in range(el.nv):
        He = edge_monomial_moments(el, el.basis3, j)
        abar, aund = traces[j]
        I_grad += He @ (abar * g.normals[j, 0] + aund * g.normals[j, 1])
    I_grad = I_grad[1:]
    # enhancement: (phi_i, g_t)_K = (Pi phi_i, g_t)_K = |K| chi_t^perp(Pi phi_i)
    I_perp = el.area * lift.pi_L[el.nk:, :el.nk]
    C = coef.T @ np.vstack([I_grad, I_perp])

    H2 = monomial_mass(q, el.basis)
    H = sla.block_diag(H2, H2)
    pi0_star = solve_scaled(H, C, el.index, "L2 mass matrix H")
    return L2Projection(H, C, pi0_star, D @ pi0_star, coef, I_grad, I_perp)


# --------------------------------------------------------------- gradient


@dataclass
class GradientProjection:
    H_grad: np.ndarray  # diag(H1, H1, H1, H1)
    C_grad: np.ndarray  # (M, grad phi^T)_K, 12 x nk
    pi_grad_star: np.ndarray


def gradient_projector(el, ellip, traces, H1):
    g = el.geometry
    C = np.zeros((12, el.nk))
    dm = np.zeros((3, 2))
    dm[1, 0] = dm[2, 1] = 1.0 / el.hK  # d/dx m_2, d/dy m_3
    He = [edge_monomial_moments(el, el.basis1, j) for j in range(el.nv)]
    for slot, (k, l) in enumerate(MATRIX_SLOTS):
        rows = slice(3 * slot, 3 * slot + 3)
        # int_dK m_i phi_{u,k} n_l via the edge trace of component k
        for j in range(el.nv):
            C[rows] += g.normals[j, l] * (He[j] @ traces[j][k])
        # - d_l m_i int_K phi_{u,k}
        C[rows] -= np.outer(dm[:, l], el.area * ellip.P0[k])
    Hg = sla.block_diag(H1, H1, H1, H1)
    return GradientProjection(Hg, C, solve_scaled(Hg, C, el.index, "gradient mass matrix"))


def gradient_coefficients(basis):
    """Coefficients of grad m_alpha in the matrix basis, shape (12, 12):
    column alpha holds the 12 coefficients of the 2x2 matrix grad m_alpha."""
    R = [monomial_derivative_coefficients(2, d, basis.scale) for d in (0, 1)]
    out = np.zeros((12, 12))
    for c in (0, 1):
        for a in range(6):
            for l in (0, 1):
                slot = 2 * c + l
                out[3 * slot: 3 * slot + 3, 6 * c + a] = R[l][a]
    return out


# ----------------------------------------------------------------- bundle


@dataclass
class LocalProjectors:
    """Every local matrix of one cell."""

    index: int
    nv: int
    nk: int
    area: float
    hK: float
    centroid: np.ndarray
    D: np.ndarray
    G: np.ndarray
    B: np.ndarray
    G_tilde: np.ndarray
    B_tilde: np.ndarray
    P0: np.ndarray
    pi_star: np.ndarray
    pi: np.ndarray
    D_L: np.ndarray
    B_L: np.ndarray
    pi_L_star: np.ndarray
    pi_L: np.ndarray
    H1: np.ndarray
    div_moments: np.ndarray  # r, (3, nk)
    div_coeffs: np.ndarray  # a, (3, nk)
    H: np.ndarray
    C: np.ndarray
    pi0_star: np.ndarray
    pi0: np.ndarray
    H_grad: np.ndarray
    C_grad: np.ndarray
    pi_grad_star: np.ndarray
    T: np.ndarray
    quad_offsets: np.ndarray | None = None  # cell rule points minus the centroid
    quad_weights: np.ndarray | None = None

    @property
    def basis(self):
        return ScaledMonomialBasis(self.centroid, self.hK, 2)

    def to_dict(self):
        """Row-major nested lists of every matrix, for JSON dumps."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def local_projectors(geometry, quad_degree=6):
    el = Element(geometry, quad_degree)
    D = transition_matrix(el)
    ellip = elliptic_projector(el, D)
    lift = lifting_projector(el, D, ellip)
    H1 = monomial_mass(el.quad, el.basis1)
    a, r = divergence_expansion(el, H1)
    traces = [edge_trace_expansion(el, j) for j in range(el.nv)]
    l2 = l2_projector(el, D, ellip, lift, a, traces, H1)
    grad = gradient_projector(el, ellip, traces, H1)
    return LocalProjectors(
        index=el.index,
        nv=el.nv,
        nk=el.nk,
        area=el.area,
        hK=el.hK,
        centroid=el.centroid,
        D=D,
        G=ellip.G,
        B=ellip.B,
        G_tilde=ellip.G_tilde,
        B_tilde=ellip.B_tilde,
        P0=ellip.P0,
        pi_star=ellip.pi_star,
        pi=ellip.pi,
        D_L=lift.D_L,
        B_L=lift.B_L,
        pi_L_star=lift.pi_L_star,
        pi_L=lift.pi_L,
        H1=H1,
        div_moments=r,
        div_coeffs=a,
        H=l2.H,
        C=l2.C,
        pi0_star=l2.pi0_star,
        pi0=l2.pi0,
        H_grad=grad.H_grad,
        C_grad=grad.C_grad,
        pi_grad_star=grad.pi_grad_star,
        T=triple_product_tensor(el.quad, el.basis),
        quad_offsets=el.quad.points - el.centroid,
        quad_weights=el.quad.weights,
    )
