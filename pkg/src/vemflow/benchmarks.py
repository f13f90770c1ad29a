"""Benchmark problems: exact fields, forcing and boundary data.

Forcing follows the momentum equation in the form

    u_t - nu Lap(u) + (u . grad) u - grad(p) = f,

so a pressure enters the forcing with a minus sign.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

UNIT_SQUARE = ((0.0, 1.0), (0.0, 1.0))
KOVASZNAY_DOMAIN = ((-0.5, 1.0), (-0.5, 1.5))


@dataclass
class BenchmarkCase:
    """Exact fields of a steady problem (or one time level of an unsteady one).

    Closures take points of shape (n, 2). ``gradient`` returns (n, 2, 2)
    with ``[:, k, l] = d u_k / d x_l``.
    """

    name: str
    nu: float
    domain: tuple = UNIT_SQUARE
    velocity: Callable | None = None
    gradient: Callable | None = None
    pressure: Callable | None = None
    forcing: Callable | None = None
    boundary: Callable | None = None
    mesh: str = "voronoi:32"
    params: dict = field(default_factory=dict)  # rho/alpha presets
    extra: dict = field(default_factory=dict)

    @property
    def has_exact(self):
        return self.velocity is not None

    @property
    def area(self):
        (x0, x1), (y0, y1) = self.domain
        return (x1 - x0) * (y1 - y0)


@dataclass
class UnsteadyCase:
    name: str
    nu: float
    at: Callable  # t -> BenchmarkCase
    t_end: float = 1.0
    domain: tuple = UNIT_SQUARE
    mesh: str = "voronoi:32"


def _xy(pts):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    return pts[:, 0], pts[:, 1]


def _forcing(nu, u, grad, lap, grad_p, dudt=None):
    def f(pts):
        U, G = u(pts), grad(pts)
        out = -nu * lap(pts) + np.einsum("nkl,nl->nk", G, U) - grad_p(pts)
        if dudt is not None:
            out = out + dudt(pts)
        return out

    return f


# ------------------------------------------------------------------ example 1


def _ex1_fields(scale_u=1.0, scale_p=1.0):
    def u(pts):
        x, y = _xy(pts)
        return scale_u * np.stack(
            [-0.5 * np.cos(x) ** 2 * np.cos(y) * np.sin(y), 0.5 * np.cos(y) ** 2 * np.cos(x) * np.sin(x)], axis=1
        )

    def grad(pts):
        x, y = _xy(pts)
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = 0.25 * np.sin(2 * x) * np.sin(2 * y)
        g[:, 0, 1] = -0.5 * np.cos(x) ** 2 * np.cos(2 * y)
        g[:, 1, 0] = 0.5 * np.cos(y) ** 2 * np.cos(2 * x)
        g[:, 1, 1] = -0.25 * np.sin(2 * x) * np.sin(2 * y)
        return scale_u * g

    def lap(pts):
        x, y = _xy(pts)
        return scale_u * np.stack(
            [np.sin(2 * y) * (2 * np.cos(x) ** 2 - 0.5), -np.sin(2 * x) * (2 * np.cos(y) ** 2 - 0.5)], axis=1
        )

    def p(pts):
        x, y = _xy(pts)
        return scale_p * (np.sin(x) - np.sin(y))

    def grad_p(pts):
        x, y = _xy(pts)
        return scale_p * np.stack([np.cos(x), -np.cos(y)], axis=1)

    return u, grad, lap, p, grad_p


def example1(nu=1.0, mesh="voronoi:32"):
    u, grad, lap, p, grad_p = _ex1_fields()
    return BenchmarkCase(
        name="example1",
        nu=nu,
        velocity=u,
        gradient=grad,
        pressure=p,
        forcing=_forcing(nu, u, grad, lap, grad_p),
        boundary=u,
        mesh=mesh,
        extra={"laplacian": lap, "pressure_gradient": grad_p},
    )


def example4(nu=1.0, t_end=1.0, mesh="voronoi:32"):
    """Example 1 fields scaled by (t+1)^2 (velocity) and (t+1) (pressure)."""

    def at(t):
        s = (t + 1.0) ** 2
        u, grad, lap, p, grad_p = _ex1_fields(s, t + 1.0)
        u1 = _ex1_fields()[0]

        def dudt(pts):
            return 2.0 * (t + 1.0) * u1(pts)

        return BenchmarkCase(
            name="example4",
            nu=nu,
            velocity=u,
            gradient=grad,
            pressure=p,
            forcing=_forcing(nu, u, grad, lap, grad_p, dudt),
            boundary=u,
            mesh=mesh,
            extra={"t": t, "dudt": dudt},
        )

    return UnsteadyCase(name="example4", nu=nu, at=at, t_end=t_end, mesh=mesh)


# ------------------------------------------------------------------ Kovasznay


def kovasznay_lambda(Re):
    return Re / 2.0 - np.sqrt(Re ** 2 / 4.0 + 4.0 * np.pi ** 2)


def kovasznay(Re=40.0, mesh="voronoi:1000"):
    lam = kovasznay_lambda(Re)
    (x0, x1), (y0, y1) = KOVASZNAY_DOMAIN
    # zero-mean offset by numerical integration over the domain
    mean = quad(lambda x: -0.5 * np.exp(2 * lam * x), x0, x1)[0] / (x1 - x0)
    p0 = -mean
    nu = 1.0 / Re
    tp = 2 * np.pi

    def u(pts):
        x, y = _xy(pts)
        e = np.exp(lam * x)
        return np.stack([1 - e * np.cos(tp * y), lam / tp * e * np.sin(tp * y)], axis=1)

    def grad(pts):
        x, y = _xy(pts)
        e = np.exp(lam * x)
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = -lam * e * np.cos(tp * y)
        g[:, 0, 1] = tp * e * np.sin(tp * y)
        g[:, 1, 0] = lam ** 2 / tp * e * np.sin(tp * y)
        g[:, 1, 1] = lam * e * np.cos(tp * y)
        return g

    def lap(pts):
        x, y = _xy(pts)
        e = np.exp(lam * x)
        k = lam ** 2 - tp ** 2
        return np.stack([-k * e * np.cos(tp * y), lam / tp * k * e * np.sin(tp * y)], axis=1)

    def p(pts):
        x, _ = _xy(pts)
        return -0.5 * np.exp(2 * lam * x) + p0

    def grad_p(pts):
        x, _ = _xy(pts)
        return np.stack([-lam * np.exp(2 * lam * x), np.zeros_like(x)], axis=1)

    return BenchmarkCase(
        name="kovasznay",
        nu=nu,
        domain=KOVASZNAY_DOMAIN,
        velocity=u,
        gradient=grad,
        pressure=p,
        forcing=_forcing(nu, u, grad, lap, grad_p),
        boundary=u,
        mesh=mesh,
        extra={"lambda": lam, "p0": p0, "Re": Re, "laplacian": lap, "pressure_gradient": grad_p},
    )


# ------------------------------------------------------------------ cavity


def cavity(Re=100.0, mesh="triangle:64x64"):
    (x0, x1), (y0, y1) = UNIT_SQUARE

    def boundary(pts):
        _, y = _xy(pts)
        out = np.zeros((len(y), 2))
        # the lid value also wins at the two top corners
        out[np.abs(y - y1) < 1e-12, 0] = 1.0
        return out

    return BenchmarkCase(
        name="cavity",
        nu=1.0 / Re,
        boundary=boundary,
        mesh=mesh,
        params={"rho": 1.2, "alpha": 0.7 * Re},
        extra={"Re": Re},
    )


# ------------------------------------------------------------------ small cases


def zero(nu=1.0, mesh="quad:4x4"):
    def z(pts):
        return np.zeros((len(np.asarray(pts).reshape(-1, 2)), 2))

    def zg(pts):
        return np.zeros((len(np.asarray(pts).reshape(-1, 2)), 2, 2))

    def zp(pts):
        return np.zeros(len(np.asarray(pts).reshape(-1, 2)))

    return BenchmarkCase(
        name="zero", nu=nu, velocity=z, gradient=zg, pressure=zp, forcing=None, boundary=None, mesh=mesh
    )


def patch(nu=1.0, mesh="voronoi:8"):
    """Quadratic divergence-free velocity and linear zero-mean pressure on
    the unit square."""

    def u(pts):
        x, y = _xy(pts)
        return np.stack([x ** 2 + y, -2 * x * y + x], axis=1)

    def grad(pts):
        x, y = _xy(pts)
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = 2 * x
        g[:, 0, 1] = 1.0
        g[:, 1, 0] = -2 * y + 1
        g[:, 1, 1] = -2 * x
        return g

    def lap(pts):
        x, _ = _xy(pts)
        return np.stack([np.full_like(x, 2.0), np.zeros_like(x)], axis=1)

    def p(pts):
        x, y = _xy(pts)
        return x - 2 * y + 0.5

    def grad_p(pts):
        x, _ = _xy(pts)
        return np.stack([np.ones_like(x), -2 * np.ones_like(x)], axis=1)

    return BenchmarkCase(
        name="patch",
        nu=nu,
        velocity=u,
        gradient=grad,
        pressure=p,
        forcing=_forcing(nu, u, grad, lap, grad_p),
        boundary=u,
        mesh=mesh,
        extra={"laplacian": lap, "pressure_gradient": grad_p},
    )


STEADY = {
    "zero": zero,
    "example1": example1,
    "kovasznay": kovasznay,
    "cavity": cavity,
    "patch": patch,
}
UNSTEADY = {"example4": example4}


def get_benchmark(name, **kw):
    if name in STEADY:
        return STEADY[name](**kw)
    if name in UNSTEADY:
        return UNSTEADY[name](**kw)
    raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(STEADY) + sorted(UNSTEADY)}")
