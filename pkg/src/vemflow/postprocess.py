"""Error norms, rate fitting, DoF interpolation and field export."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .assembly import quadrature_points
from .benchmarks import BenchmarkCase, UnsteadyCase, get_benchmark  # noqa: F401
from .polybasis import ScaledMonomialBasis, edge_quadrature, eval_monomial_gradients, eval_monomials


# ------------------------------------------------------------- interpolation


def interpolate(system, u):
    """DoF vector of a vector field: nodal values at vertices and edge
    midpoints, divergence moments by quadrature of
    (h_K/|K|) (-int u . grad m + int_dK (u . n) m)."""
    mesh, dm = system.mesh, system.dofmap
    chi = np.zeros(system.N)
    uv = np.asarray(u(mesh.vertices)).reshape(-1, 2)
    ue = np.asarray(u(mesh.edge_midpoints)).reshape(-1, 2)
    V = np.arange(mesh.n_vertices)
    E = np.arange(mesh.n_edges)
    for comp in (0, 1):
        chi[dm.vertex_dof(V, comp)] = uv[:, comp]
        chi[dm.edge_dof(E, comp)] = ue[:, comp]
    for k, P in enumerate(system.projectors):
        basis1 = ScaledMonomialBasis(P.centroid, P.hK, 1)
        pts = quadrature_points(P)
        U = np.asarray(u(pts)).reshape(-1, 2)
        grads = eval_monomial_gradients(basis1, pts)[:, 1:3, :]  # grad m_2, grad m_3
        vol = -np.einsum("q,qd,qjd->j", P.quad_weights, U, grads)
        xy = mesh.vertices[mesh.cells[k]]
        nxt = np.roll(xy, -1, axis=0)
        bnd = np.zeros(2)
        for a, b in zip(xy, nxt):
            rule = edge_quadrature(a, b, "gauss_lobatto_4")
            t = b - a
            n = np.array([t[1], -t[0]]) / np.hypot(*t)
            un = np.asarray(u(rule.points)).reshape(-1, 2) @ n
            bnd += np.einsum("p,p,pj->j", rule.weights, un, eval_monomials(basis1, rule.points)[:, 1:3])
        chi[dm.cell_dofs[k][-2:]] = P.hK / P.area * (vol + bnd)
    return chi


# ------------------------------------------------------------- error norms


def projected_gradient(P, chi_K, pts):
    """Gradient of Pi^K u_h at points, (n, 2, 2) with [:, k, l] = d_l u_k."""
    coeff = P.pi_star @ chi_K
    grads = eval_monomial_gradients(P.basis, pts)  # (n, 6, 2)
    return np.stack([np.einsum("nal,a->nl", grads, coeff[6 * k: 6 * k + 6]) for k in (0, 1)], axis=1)


def h1_velocity_error(system, chi, exact_gradient):
    """sqrt(sum_K |u - Pi^K u_h|_{1,K}^2) with the degree-6 cell rule."""
    total = 0.0
    for P, dofs in zip(system.projectors, system.dofmap.cell_dofs):
        pts = quadrature_points(P)
        diff = np.asarray(exact_gradient(pts)) - projected_gradient(P, chi[dofs], pts)
        total += float(np.einsum("q,qkl,qkl->", P.quad_weights, diff, diff))
    return float(np.sqrt(total))


def pressure_values(P, p_K, pts):
    return eval_monomials(ScaledMonomialBasis(P.centroid, P.hK, 1), pts) @ p_K


def l2_pressure_error(system, p, exact_pressure):
    total = 0.0
    for k, P in enumerate(system.projectors):
        pts = quadrature_points(P)
        diff = np.asarray(exact_pressure(pts)) - pressure_values(P, p[3 * k: 3 * k + 3], pts)
        total += float(P.quad_weights @ diff ** 2)
    return float(np.sqrt(total))


def fit_rate(h_list, err_list):
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h_list, dtype=float)
    e = np.asarray(err_list, dtype=float)
    if len(h) != len(e) or len(h) < 2:
        raise ValueError("need at least two (h, err) pairs")
    if np.any(h <= 0) or np.any(e <= 0):
        raise ValueError("h and err must be positive")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


# ------------------------------------------------------------- grid sampling


@dataclass
class GridField:
    x: np.ndarray  # (npts,)
    y: np.ndarray
    u1: np.ndarray  # NaN where absent
    u2: np.ndarray
    nx: int
    ny: int
    origin: tuple
    spacing: tuple

    @property
    def inside(self):
        return np.isfinite(self.u1)


class CellLocator:
    """Point location by fan-triangle membership around each centroid."""

    def __init__(self, mesh, projectors, k_nearest=12):
        self.mesh = mesh
        self.centroids = np.array([P.centroid for P in projectors])
        self.tree = cKDTree(self.centroids)
        self.k = min(k_nearest, mesh.n_cells)
        self.h = mesh.h

    def _barycentric_ok(self, k, pt, tol):
        xy = self.mesh.vertices[self.mesh.cells[k]]
        c = self.centroids[k]
        a = xy - c
        b = np.roll(xy, -1, axis=0) - c
        q = pt - c
        det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        s = (q[0] * b[:, 1] - q[1] * b[:, 0]) / det
        t = (a[:, 0] * q[1] - a[:, 1] * q[0]) / det
        return bool(np.any((s >= -tol) & (t >= -tol) & (s + t <= 1 + tol)))

    def locate(self, pt):
        _, idx = self.tree.query(pt, k=self.k)
        idx = np.atleast_1d(idx)
        for k in idx:
            if self._barycentric_ok(k, pt, 0.0):
                return int(k)
        # boundary roundoff: accept within 1e-12 h
        for k in idx:
            if self._barycentric_ok(k, pt, 1e-12 * self.h):
                return int(k)
        return -1


def sample_velocity_grid(system, chi, nx, ny, bbox=None):
    """Evaluate Pi^K u_h on a uniform (nx+1) x (ny+1) grid."""
    mesh = system.mesh
    (x0, x1), (y0, y1) = bbox if bbox is not None else mesh.bounding_box()
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    loc = CellLocator(mesh, system.projectors)
    u = np.full((len(pts), 2), np.nan)
    for n, pt in enumerate(pts):
        k = loc.locate(pt)
        if k < 0:
            continue
        P = system.projectors[k]
        coeff = P.pi_star @ chi[system.dofmap.cell_dofs[k]]
        m = eval_monomials(P.basis, pt)[0]
        u[n] = [m @ coeff[:6], m @ coeff[6:]]
    return GridField(pts[:, 0], pts[:, 1], u[:, 0], u[:, 1], nx, ny, (x0, y0),
                     ((x1 - x0) / nx, (y1 - y0) / ny))


# ------------------------------------------------------------- export


def _fmt(v):
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def export_field(obj, path, fmt="csv"):
    """Write a GridField (csv or vtk_legacy), a Telemetry or an error table
    (list of dicts) as CSV."""
    if isinstance(obj, GridField):
        if fmt == "csv":
            return write_csv(path, ["x", "y", "u1", "u2"], zip(obj.x, obj.y, obj.u1, obj.u2))
        if fmt == "vtk_legacy":
            return _write_vtk(obj, path)
        raise ValueError(f"unknown format {fmt!r}")
    if hasattr(obj, "rows"):  # telemetry
        return write_csv(path, ["n", "dp_norm", "lambda", "seconds"],
                         ([r["n"], r["dp_norm"], r["lambda"], r["seconds"]] for r in obj.rows))
    if isinstance(obj, list):
        return write_error_table(obj, path)
    raise TypeError(f"cannot export {type(obj).__name__}")


ERROR_TABLE_FIELDS = ["dof", "h", "erruH1", "errpL2", "iterations"]


def write_error_table(rows, path):
    return write_csv(path, ERROR_TABLE_FIELDS, ([r[k] for k in ERROR_TABLE_FIELDS] for r in rows))


def _write_vtk(field, path):
    npts = (field.nx + 1) * (field.ny + 1)
    lines = [
        "# vtk DataFile Version 3.0",
        "velocity sampled on a uniform grid",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {field.nx + 1} {field.ny + 1} 1",
        f"ORIGIN {_fmt(field.origin[0])} {_fmt(field.origin[1])} 0",
        f"SPACING {_fmt(field.spacing[0])} {_fmt(field.spacing[1])} 1",
        f"POINT_DATA {npts}",
        "FIELD FieldData 1",
        f"velocity 2 {npts} double",
    ]
    lines += [f"{_fmt(a)} {_fmt(b)}" for a, b in zip(field.u1, field.u2)]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_csv(path):
    with open(path) as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows)


def grid_relative_error(field, exact_velocity, component=0, interior=True):
    """Relative discrete L2 error of one velocity component on the sampled
    grid; ``interior`` drops the outermost ring of grid points."""
    ok = field.inside.copy()
    if interior:
        ring = np.zeros((field.ny + 1, field.nx + 1), dtype=bool)
        ring[[0, -1], :] = True
        ring[:, [0, -1]] = True
        ok &= ~ring.ravel()
    pts = np.column_stack([field.x[ok], field.y[ok]])
    exact = np.asarray(exact_velocity(pts))[:, component]
    got = (field.u1 if component == 0 else field.u2)[ok]
    return float(np.linalg.norm(got - exact) / np.linalg.norm(exact))
