"""Scaled monomial bases and quadrature on polygons and edges.

Scalar monomials are ordered by total degree, and within one degree by
decreasing power of x: 1, xi, eta, xi^2, xi*eta, eta^2, xi^3, ... where
xi = (x - x_D)/h_D and eta = (y - y_D)/h_D.

The vector basis of (P2)^2 has 12 members, the six scalar monomials in
component 1 followed by the same six in component 2. The matrix basis of
(P1)^{2x2} also has 12 members: m_i placed in slot (1,1), then (1,2), (2,1),
(2,2), so that index r = 3 * slot + i.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import least_squares

# (row, column) of the four matrix slots, zero-based
MATRIX_SLOTS = ((0, 0), (0, 1), (1, 0), (1, 1))


def monomial_exponents(degree):
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def n_monomials(degree):
    return (degree + 1) * (degree + 2) // 2


@dataclass(frozen=True)
class ScaledMonomialBasis:
    center: np.ndarray
    scale: float
    degree: int = 2

    @property
    def exponents(self):
        return monomial_exponents(self.degree)

    def __len__(self):
        return n_monomials(self.degree)

    def local(self, points):
        p = (np.asarray(points, dtype=float).reshape(-1, 2) - self.center) / self.scale
        return p[:, 0], p[:, 1]

    def eval(self, points):
        return eval_monomials(self, points)

    def grad(self, points):
        return eval_monomial_gradients(self, points)


def eval_monomials(basis, points):
    xi, eta = basis.local(points)
    return np.stack([xi ** a * eta ** b for a, b in basis.exponents], axis=1)


def eval_monomial_gradients(basis, points):
    """Gradients of all monomials, shape (n_points, n_monomials, 2)."""
    xi, eta = basis.local(points)
    h = basis.scale
    out = np.zeros((len(xi), len(basis), 2))
    for k, (a, b) in enumerate(basis.exponents):
        if a:
            out[:, k, 0] = a * xi ** (a - 1) * eta ** b / h
        if b:
            out[:, k, 1] = b * xi ** a * eta ** (b - 1) / h
    return out


def monomial_laplacians(basis):
    """Laplacians of the degree <= 2 monomials (constants)."""
    h2 = basis.scale ** 2
    return np.array([(2.0 * (a == 2) + 2.0 * (b == 2)) / h2 for a, b in basis.exponents])


def vector_monomials(values):
    """Expand scalar values (n, 6) to the 12 vector monomials, (n, 12, 2)."""
    n, m = values.shape
    out = np.zeros((n, 2 * m, 2))
    out[:, :m, 0] = values
    out[:, m:, 1] = values
    return out


def monomial_derivative_coefficients(degree, direction, scale):
    """Matrix R with d/dx_dir m_a = sum_b R[a, b] m_b (m_b of degree - 1)."""
    src = monomial_exponents(degree)
    dst = {e: k for k, e in enumerate(monomial_exponents(max(degree - 1, 0)))}
    R = np.zeros((len(src), len(dst)))
    for k, (a, b) in enumerate(src):
        if direction == 0 and a:
            R[k, dst[(a - 1, b)]] = a / scale
        elif direction == 1 and b:
            R[k, dst[(a, b - 1)]] = b / scale
    return R


# --------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values):
        """Integrate values sampled at the points (leading axis)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


# Dunavant's 12-point degree-6 rule on the reference triangle, refined below
_DUNAVANT6 = (
    (0.116786275726379, 0.501426509658179, 0.249286745170910),
    (0.050844906370207, 0.873821971016996, 0.063089014491502),
    (0.082851075618374, 0.053145049844817, 0.310352451033784),
)


def _dunavant_points(params):
    w1, a1, w2, a2, w3, b3, c3 = params
    pts, wts = [], []
    for w, bary in (
        (w1, (a1, (1 - a1) / 2, (1 - a1) / 2)),
        (w2, (a2, (1 - a2) / 2, (1 - a2) / 2)),
        (w3, (b3, c3, 1 - b3 - c3)),
    ):
        for perm in sorted(set(itertools.permutations(bary))):
            pts.append(perm[1:])
            wts.append(w / 2.0)
    return np.array(pts), np.array(wts)


@lru_cache(maxsize=None)
def triangle_rule_reference():
    """Degree-6 symmetric rule on the triangle (0,0),(1,0),(0,1).

    The tabulated 15-digit parameters are polished by solving the moment
    equations so that the rule is exact to full double precision.
    """
    from math import factorial

    moments = [(i, j) for i in range(7) for j in range(7 - i)]
    exact = np.array([factorial(i) * factorial(j) / factorial(i + j + 2) for i, j in moments])
    x0 = np.array(
        [
            _DUNAVANT6[0][0], _DUNAVANT6[0][1],
            _DUNAVANT6[1][0], _DUNAVANT6[1][1],
            _DUNAVANT6[2][0], _DUNAVANT6[2][1], _DUNAVANT6[2][2],
        ]
    )

    def residual(params):
        p, w = _dunavant_points(params)
        return np.array([(w * p[:, 0] ** i * p[:, 1] ** j).sum() for i, j in moments]) / exact - 1

    sol = least_squares(residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return _dunavant_points(sol.x)


def _collapsed_gauss(degree):
    n = degree // 2 + 1
    xg, wg = np.polynomial.legendre.leggauss(n)
    s, ws = (xg + 1) / 2, wg / 2
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    pts = np.stack([u.ravel(), (v * (1 - u)).ravel()], axis=1)
    return pts, (wu * wv * (1 - u)).ravel()


def triangle_quadrature(a, b, c, degree=6):
    if degree <= 6:
        ref, w = triangle_rule_reference()
    else:
        ref, w = _collapsed_gauss(degree)
    J = np.column_stack([b - a, c - a])
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    return a + ref @ J.T, w * det


def polygon_quadrature(geometry, exactness_degree=6):
    """Fan the polygon into triangles from its centroid and apply a
    symmetric triangle rule on each."""
    xy = geometry.vertices
    c = geometry.centroid
    nxt = np.roll(xy, -1, axis=0)
    pts, wts = [], []
    for a, b in zip(xy, nxt):
        p, w = triangle_quadrature(c, a, b, exactness_degree)
        if not np.all(w > 0):
            raise ValueError(
                f"cell {geometry.index} is not star-shaped with respect to its centroid"
            )
        pts.append(p)
        wts.append(w)
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts), exactness_degree)


@dataclass(frozen=True)
class EdgeRule:
    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,), sum to the edge length
    params: np.ndarray  # (s - s_e) / h_e in [-1/2, 1/2]
    degree: int


_EDGE_RULES = {
    # reference nodes on [0, 1] and weights summing to 1
    "simpson": (np.array([0.0, 0.5, 1.0]), np.array([1.0, 4.0, 1.0]) / 6.0, 3),
    "gauss_lobatto_4": (
        np.array([0.0, 0.5 - 0.5 / np.sqrt(5.0), 0.5 + 0.5 / np.sqrt(5.0), 1.0]),
        np.array([1.0, 5.0, 5.0, 1.0]) / 12.0,
        5,
    ),
}


def edge_quadrature(a, b, rule="gauss_lobatto_4"):
    """1D rule on the segment from ``a`` to ``b``."""
    try:
        s, w, degree = _EDGE_RULES[rule]
    except KeyError:
        raise ValueError(f"unknown edge rule {rule!r}") from None
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    if length == 0:
        raise ValueError("degenerate edge")
    return EdgeRule(a + s[:, None] * (b - a), w * length, s - 0.5, degree)


# ------------------------------------------------------- monomial integrals


def monomial_mass(quad, basis_p, basis_q=None):
    """(m_alpha, m_beta)_K for m_alpha in basis_p, m_beta in basis_q."""
    basis_q = basis_p if basis_q is None else basis_q
    vp = eval_monomials(basis_p, quad.points)
    vq = eval_monomials(basis_q, quad.points)
    return (vp * quad.weights[:, None]).T @ vq


def triple_product_tensor(quad, basis):
    """T[r, s, t] = int_K (M_r m_s) . m_t for the 12 matrix monomials of
    (P1)^{2x2} and the 12 vector monomials of (P2)^2."""
    v = eval_monomials(basis, quad.points)  # (n, 6)
    m1 = v[:, :3]
    vec = vector_monomials(v)  # (n, 12, 2)
    T = np.zeros((12, 12, 12))
    for slot, (k, l) in enumerate(MATRIX_SLOTS):
        # (M_r m_s) . m_t = m_i * (m_s)_l * (m_t)_k
        T[3 * slot: 3 * slot + 3] = np.einsum(
            "q,qi,qs,qt->ist", quad.weights, m1, vec[:, :, l], vec[:, :, k]
        )
    return T
