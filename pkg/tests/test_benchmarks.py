import numpy as np
import pytest
import sympy as sp
from scipy.integrate import dblquad

from vemflow.benchmarks import cavity, example1, example4, get_benchmark, kovasznay, kovasznay_lambda, patch

x, y, t = sp.symbols("x y t", real=True)
RNG = np.random.default_rng(11)


def _symbolic_fields(name, nu, Re=40.0):
    if name == "example1":
        u = [-sp.cos(x) ** 2 * sp.cos(y) * sp.sin(y) / 2, sp.cos(y) ** 2 * sp.cos(x) * sp.sin(x) / 2]
        p = sp.sin(x) - sp.sin(y)
    elif name == "kovasznay":
        lam = Re / 2 - sp.sqrt(Re ** 2 / 4 + 4 * sp.pi ** 2)
        u = [1 - sp.exp(lam * x) * sp.cos(2 * sp.pi * y), lam / (2 * sp.pi) * sp.exp(lam * x) * sp.sin(2 * sp.pi * y)]
        p = -sp.exp(2 * lam * x) / 2
    elif name == "patch":
        u = [x ** 2 + y, -2 * x * y + x]
        p = x - 2 * y
    return u, p


def _forcing_expr(u, p, nu, dudt=(0, 0)):
    out = []
    for k in range(2):
        lap = sp.diff(u[k], x, 2) + sp.diff(u[k], y, 2)
        conv = u[0] * sp.diff(u[k], x) + u[1] * sp.diff(u[k], y)
        out.append(dudt[k] - nu * lap + conv - sp.diff(p, (x, y)[k]))
    return out


def _eval(exprs, pts):
    fs = [sp.lambdify((x, y), e, "numpy") for e in exprs]
    return np.column_stack([np.broadcast_to(f(pts[:, 0], pts[:, 1]), (len(pts),)) for f in fs])


def _points(case, n=25):
    (x0, x1), (y0, y1) = case.domain
    return np.column_stack([RNG.uniform(x0, x1, n), RNG.uniform(y0, y1, n)])


@pytest.mark.parametrize("name,nu", [("example1", 1.0), ("example1", 0.01), ("kovasznay", 1 / 40), ("patch", 0.3)])
def test_fields_match_symbolic(name, nu):
    case = get_benchmark(name, nu=nu) if name != "kovasznay" else kovasznay(Re=1 / nu)
    u, p = _symbolic_fields(name, nu, Re=1 / nu)
    pts = _points(case)
    np.testing.assert_allclose(case.velocity(pts), _eval(u, pts), atol=1e-13)
    grads = [sp.diff(u[k], v) for k in range(2) for v in (x, y)]
    np.testing.assert_allclose(case.gradient(pts).reshape(-1, 4), _eval(grads, pts), atol=1e-12)
    lap = [sp.diff(u[k], x, 2) + sp.diff(u[k], y, 2) for k in range(2)]
    np.testing.assert_allclose(case.extra["laplacian"](pts), _eval(lap, pts), atol=1e-10)
    np.testing.assert_allclose(case.forcing(pts), _eval(_forcing_expr(u, p, nu), pts), atol=1e-10)
    div = sp.simplify(sp.diff(u[0], x) + sp.diff(u[1], y))
    assert div == 0


def test_pressures_have_zero_mean():
    for case in (example1(), kovasznay(), patch()):
        (x0, x1), (y0, y1) = case.domain
        mean = dblquad(lambda yy, xx: case.pressure(np.array([[xx, yy]]))[0], x0, x1, y0, y1)[0]
        assert abs(mean) < 1e-10


def test_kovasznay_lambda():
    assert kovasznay_lambda(40.0) == pytest.approx(-0.9637, abs=1e-4)
    case = kovasznay()
    u = case.velocity(np.array([[-0.5, 0.5]]))[0]
    assert u[0] == pytest.approx(1 - np.exp(case.extra["lambda"] * -0.5) * np.cos(np.pi))


def test_example4_time_dependence():
    case = example4(nu=0.1)
    tt = 0.37
    c = case.at(tt)
    u1, p1 = _symbolic_fields("example1", 0.1)
    s = (t + 1) ** 2
    u = [s * e for e in u1]
    p = (t + 1) * p1
    f = _forcing_expr(u, p, 0.1, dudt=[sp.diff(e, t) for e in u])
    f = [e.subs(t, tt) for e in f]
    pts = _points(c)
    np.testing.assert_allclose(c.forcing(pts), _eval(f, pts), atol=1e-10)
    np.testing.assert_allclose(c.velocity(pts), (1 + tt) ** 2 * example1().velocity(pts), atol=1e-14)


def test_cavity_preset():
    case = cavity()
    assert case.params == {"rho": 1.2, "alpha": pytest.approx(70.0)}
    g = case.boundary(np.array([[0.5, 1.0], [0.0, 1.0], [1.0, 0.5], [0.5, 0.0]]))
    np.testing.assert_array_equal(g, [[1, 0], [1, 0], [0, 0], [0, 0]])
    assert not case.has_exact


def test_unknown_benchmark():
    with pytest.raises(KeyError):
        get_benchmark("poiseuille")
