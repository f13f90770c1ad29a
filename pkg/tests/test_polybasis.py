import numpy as np
import pytest

from vemflow.mesh import PolygonalMesh, generate_structured, generate_voronoi
from vemflow.polybasis import (
    MATRIX_SLOTS,
    ScaledMonomialBasis,
    edge_quadrature,
    eval_monomial_gradients,
    eval_monomials,
    monomial_derivative_coefficients,
    monomial_laplacians,
    monomial_mass,
    polygon_quadrature,
    triangle_quadrature,
    triple_product_tensor,
)

from oracles import scalar_mass, triple_tensor

UNIT = ScaledMonomialBasis(np.array([0.5, 0.5]), np.sqrt(2), 2)


def _unit_quad():
    return polygon_quadrature(generate_structured(1, 1).geometry(0))


def test_constant_monomial():
    pts = np.random.default_rng(0).random((5, 2))
    np.testing.assert_array_equal(eval_monomials(UNIT, pts)[:, 0], 1.0)


def test_centered_linears_vanish():
    m = eval_monomials(UNIT, [[0.5, 0.5]])[0]
    assert m[1] == 0 and m[2] == 0


def test_m2_value():
    assert eval_monomials(UNIT, [[1.0, 0.5]])[0, 1] == pytest.approx(0.5 / np.sqrt(2))


def test_gradients_closed_form():
    pts = np.array([[0.2, 0.9], [0.7, 0.1]])
    g = eval_monomial_gradients(UNIT, pts)
    np.testing.assert_array_equal(g[:, 0], 0.0)
    m = eval_monomials(UNIT, pts)
    np.testing.assert_allclose(g[:, 3, 0], 2 * m[:, 1] / UNIT.scale)
    np.testing.assert_array_equal(g[:, 3, 1], 0.0)


def test_gradients_finite_difference():
    basis = ScaledMonomialBasis(np.array([0.3, -0.2]), 0.7, 3)
    pts = np.random.default_rng(1).random((10, 2))
    step = 1e-6 * basis.scale
    g = eval_monomial_gradients(basis, pts)
    for d in (0, 1):
        e = np.zeros(2)
        e[d] = step
        fd = (eval_monomials(basis, pts + e) - eval_monomials(basis, pts - e)) / (2 * step)
        np.testing.assert_allclose(g[:, :, d], fd, atol=1e-7)


def test_laplacians():
    lap = monomial_laplacians(UNIT)
    np.testing.assert_allclose(lap, [0, 0, 0, 2 / 2, 0, 2 / 2])


def test_derivative_coefficients():
    pts = np.random.default_rng(2).random((6, 2))
    b1 = ScaledMonomialBasis(UNIT.center, UNIT.scale, 1)
    g = eval_monomial_gradients(UNIT, pts)
    for d in (0, 1):
        R = monomial_derivative_coefficients(2, d, UNIT.scale)
        np.testing.assert_allclose(eval_monomials(b1, pts) @ R.T, g[:, :, d], atol=1e-14)


def test_square_integrals():
    q = _unit_quad()
    assert q.integrate(np.ones(len(q.weights))) == pytest.approx(1.0, abs=1e-15)
    x, y = q.points.T
    assert q.integrate(x ** 2 * y ** 2) == pytest.approx(1 / 9, abs=1e-14)


def test_centered_mean_zero_on_voronoi():
    mesh = generate_voronoi(n_cells=12, lloyd_iterations=10)
    for g in mesh.geometries():
        q = polygon_quadrature(g)
        basis = ScaledMonomialBasis(g.centroid, g.diameter, 2)
        m = eval_monomials(basis, q.points)
        assert abs(q.integrate(m[:, 1])) <= 1e-13 * g.area
        assert abs(q.integrate(m[:, 2])) <= 1e-13 * g.area


def test_triangle_rule_degree_six():
    # closed-form moments of the reference triangle: a! b! / (a + b + 2)!
    from math import factorial

    p, w = triangle_quadrature(np.zeros(2), np.array([1.0, 0]), np.array([0, 1.0]))
    for a in range(7):
        for b in range(7 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert w @ (p[:, 0] ** a * p[:, 1] ** b) == pytest.approx(exact, abs=1e-15)


def test_nonconvex_fan_rejected():
    # vertex 3 is a reflex corner that hides the centroid from an edge
    v = [[0, 0], [4, 0], [4, 0.2], [0.5, 0.3], [4, 4], [0, 4]]
    g = PolygonalMesh(v, [list(range(6))]).geometry(0)
    with pytest.raises(ValueError, match="star-shaped"):
        polygon_quadrature(g)


def test_edge_rules():
    a, b = np.zeros(2), np.array([1.0, 0.0])
    s = edge_quadrature(a, b, "simpson")
    assert s.weights.sum() == pytest.approx(1.0)
    assert s.weights @ s.points[:, 0] ** 3 == 0.25
    gl = edge_quadrature(a, b, "gauss_lobatto_4")
    assert gl.weights @ gl.points[:, 0] ** 5 == pytest.approx(1 / 6, abs=1e-14)
    np.testing.assert_allclose(gl.params[[0, -1]], [-0.5, 0.5])
    with pytest.raises(ValueError):
        edge_quadrature(a, b, "trapezoid")
    with pytest.raises(ValueError):
        edge_quadrature(a, a)


def test_scalar_mass_unit_square():
    H1 = monomial_mass(_unit_quad(), ScaledMonomialBasis(UNIT.center, UNIT.scale, 1))
    assert H1[0, 0] == pytest.approx(1.0)
    assert abs(H1[0, 1]) < 1e-15
    assert H1[1, 1] == pytest.approx(1 / 24, abs=1e-15)
    np.testing.assert_allclose(H1, scalar_mass(3), atol=1e-15)


def test_triple_tensor_structure():
    T = triple_product_tensor(_unit_quad(), UNIT)
    for slot, (k, l) in enumerate(MATRIX_SLOTS):
        for i in range(3):
            r = 3 * slot + i
            # M_r m_s has only component k and picks (m_s)_l
            assert np.all(T[r][6 * (1 - l): 6 * (1 - l) + 6] == 0)
            assert np.all(T[r][:, 6 * (1 - k): 6 * (1 - k) + 6] == 0)
    assert T[0, 0, 0] == pytest.approx(1.0)


def test_triple_tensor_matches_symbolic():
    T = triple_product_tensor(_unit_quad(), UNIT)
    ref = triple_tensor()
    idx = np.random.default_rng(5).integers(0, 12, size=(40, 3))
    for r, s, t in idx:
        assert T[r, s, t] == pytest.approx(ref[r, s, t], abs=1e-13)
