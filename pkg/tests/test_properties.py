"""Randomized invariants checked with hypothesis."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from vemflow.assembly import local_stiffness, nonlinear_matrices, skew
from vemflow.mesh import PolygonalMesh
from vemflow.postprocess import fit_rate
from vemflow.vemspace import gradient_coefficients, local_projectors

SETTINGS = settings(max_examples=25, deadline=None)


@st.composite
def convex_polygons(draw):
    """Vertices on a rotated, stretched ellipse: always convex and CCW."""
    n = draw(st.integers(3, 9))
    gaps = np.array(draw(st.lists(st.floats(0.3, 1.0), min_size=n, max_size=n)))
    theta = np.cumsum(gaps) / gaps.sum() * 2 * np.pi
    a = draw(st.floats(0.2, 3.0))
    b = draw(st.floats(0.2, 3.0))
    phi = draw(st.floats(0.0, np.pi))
    shift = np.array(draw(st.tuples(st.floats(-5, 5), st.floats(-5, 5))))
    pts = np.column_stack([a * np.cos(theta), b * np.sin(theta)])
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    return pts @ R.T + shift


def _projectors(xy):
    mesh = PolygonalMesh(xy, [np.arange(len(xy))])
    return local_projectors(mesh.geometry(0))


@SETTINGS
@given(convex_polygons())
def test_projectors_reproduce_quadratics(xy):
    P = _projectors(xy)
    I = np.eye(12)
    np.testing.assert_allclose(P.pi_star @ P.D, I, atol=1e-9)
    np.testing.assert_allclose(P.pi0_star @ P.D, I, atol=1e-9)
    np.testing.assert_allclose(P.pi_grad_star @ P.D, gradient_coefficients(P.basis), atol=1e-8)
    np.testing.assert_allclose(P.H, P.C @ P.D, atol=1e-9 * np.abs(P.H).max())


@SETTINGS
@given(convex_polygons(), st.tuples(st.floats(-10, 10), st.floats(-10, 10)))
def test_local_matrices_translation_invariant(xy, shift):
    a = _projectors(xy)
    b = _projectors(xy + np.asarray(shift))
    Ka, Kb = local_stiffness(a), local_stiffness(b)
    np.testing.assert_allclose(Ka, Kb, atol=1e-8 * np.abs(Ka).max())
    np.testing.assert_allclose(a.pi0_star, b.pi0_star, atol=1e-8)


@SETTINGS
@given(convex_polygons(), st.integers(0, 2 ** 32 - 1))
def test_stiffness_psd_with_rigid_kernel(xy, seed):
    P = _projectors(xy)
    K = local_stiffness(P)
    np.testing.assert_allclose(K, K.T, atol=1e-12 * np.abs(K).max())
    w = np.linalg.eigvalsh(0.5 * (K + K.T))
    assert w.min() >= -1e-10 * w.max()
    # constants are the kernel: exactly two zero eigenvalues
    assert np.sum(np.abs(w) <= 1e-10 * w.max()) == 2


@SETTINGS
@given(convex_polygons(), st.integers(0, 2 ** 32 - 1))
def test_skew_convection(xy, seed):
    P = _projectors(xy)
    rng = np.random.default_rng(seed)
    chi = rng.standard_normal(P.nk)
    _, N2, _ = nonlinear_matrices(P, chi)
    S = skew(N2)
    x = rng.standard_normal(P.nk)
    assert abs(x @ S @ x) <= 1e-12 * (x @ x) * np.linalg.norm(S, 2)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(1e-6, 1e3), st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6, unique=True))
def test_fit_rate_power_law(rate, c, h):
    h = np.asarray(h)
    if np.ptp(np.log(h)) < 1e-3:
        return
    assert abs(fit_rate(h, c * h ** rate) - rate) <= 1e-8
