"""Local matrices of the discrete problem and their global assembly.

Global velocity DoFs (``N = 2V + 2E + 2C``) are numbered component by
component: component-1 vertex values, component-1 edge midpoints, then the
same for component 2, and finally the two divergence moments of every cell.
Pressure is discontinuous P1 in the scaled monomials of each cell, three
coefficients per cell (``M = 3C``).
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import mesh_size
from .polybasis import ScaledMonomialBasis, eval_monomials, vector_monomials
from .vemspace import local_projectors

log = logging.getLogger(__name__)


# ----------------------------------------------------------- local blocks


def local_stiffness(P):
    """Consistency plus identity (dofi-dofi) stabilization."""
    ImP = np.eye(P.nk) - P.pi
    return P.pi_star.T @ P.G @ P.pi_star + ImP.T @ ImP


def local_divergence(P):
    """B_K[i, l] = (div phi_i, m_l)_K."""
    return P.div_moments.T.copy()


def pressure_mass(P):
    return P.H1.copy()


def constraint_block(P):
    # m_2, m_3 have zero mean on K because the basis is centred at the centroid
    return np.array([P.area, 0.0, 0.0])


def local_mass(P):
    """Consistency plus |K|-weighted stabilization of the L2 inner product."""
    ImP = np.eye(P.nk) - P.pi0
    return P.pi0_star.T @ P.H @ P.pi0_star + P.area * ImP.T @ ImP


def quadrature_points(P):
    return P.centroid + P.quad_offsets


def load_vector(P, f):
    """F_K[i] = (f, Pi0 phi_i)_K with the degree-6 cell rule."""
    pts = quadrature_points(P)
    fv = np.asarray(f(pts), dtype=float).reshape(len(pts), 2)
    if not np.all(np.isfinite(fv)):
        raise ValueError(f"forcing is not finite on cell {P.index}")
    vec = vector_monomials(eval_monomials(P.basis, pts))
    mf = np.einsum("q,qad,qd->a", P.quad_weights, vec, fv)
    return P.pi0_star.T @ mf


def nonlinear_matrices(P, chi):
    """Local convection matrices for the velocity ``chi`` on the cell.

    Returns (N1, N2, Nvec): N1[i, j] = N(phi_j; w, phi_i),
    N2[i, j] = N(w; phi_j, phi_i) (raw, not skew) and Nvec[j] = N(w; w, phi_j)
    where N(w; u, v) = int (grad(Pi_grad u) Pi0 w) . Pi0 v.
    """
    a = P.pi_grad_star @ chi
    d = P.pi0_star @ chi
    b = P.pi0_star
    c = P.pi_grad_star
    T = P.T
    N1 = np.einsum("r,sj,ti,rst->ij", a, b, b, T)
    N2 = np.einsum("rj,s,ti,rst->ij", c, d, b, T)
    Nvec = np.einsum("r,s,tj,rst->j", a, d, b, T)
    return N1, N2, Nvec


def skew(N2):
    return 0.5 * (N2 - N2.T)


# ------------------------------------------------------------- dof map


@dataclass
class DofMap:
    n_vertices: int
    n_edges: int
    n_cells: int
    cell_dofs: list  # local -> global velocity index, one array per cell
    dirichlet: np.ndarray  # bool mask over velocity DoFs

    @property
    def N(self):
        return 2 * (self.n_vertices + self.n_edges + self.n_cells)

    @property
    def M(self):
        return 3 * self.n_cells

    def pressure_dofs(self, k):
        return 3 * k + np.arange(3)

    @property
    def free(self):
        return np.flatnonzero(~self.dirichlet)

    @property
    def fixed(self):
        return np.flatnonzero(self.dirichlet)

    def component_offset(self, comp):
        return comp * (self.n_vertices + self.n_edges)

    def vertex_dof(self, v, comp):
        return self.component_offset(comp) + np.asarray(v)

    def edge_dof(self, e, comp):
        return self.component_offset(comp) + self.n_vertices + np.asarray(e)


def build_dofmap(mesh):
    V, E, C = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    off = V + E
    cell_dofs = []
    for k, cell in enumerate(mesh.cells):
        edges = mesh.cell_edges[k]
        dofs = np.concatenate(
            [cell, V + edges, off + cell, off + V + edges, [2 * off + 2 * k, 2 * off + 2 * k + 1]]
        )
        cell_dofs.append(dofs.astype(np.int64))
    mask = np.zeros(2 * (V + E + C), dtype=bool)
    bv = np.flatnonzero(mesh.boundary_vertex)
    be = np.flatnonzero(mesh.boundary_edge)
    for comp in (0, 1):
        mask[comp * off + bv] = True
        mask[comp * off + V + be] = True
    return DofMap(V, E, C, cell_dofs, mask)


# ------------------------------------------------------------- scatter


class BlockScatter:
    """Fixed-pattern scatter-add of dense local blocks into a CSR matrix.

    Local entries whose row or column maps to a negative index are dropped,
    which gives restricted (e.g. free-free) matrices from the same values.
    """

    def __init__(self, row_maps, col_maps, shape):
        rows = np.concatenate([np.repeat(r, len(c)) for r, c in zip(row_maps, col_maps)])
        cols = np.concatenate([np.tile(c, len(r)) for r, c in zip(row_maps, col_maps)])
        self.keep = (rows >= 0) & (cols >= 0)
        keys = rows[self.keep] * shape[1] + cols[self.keep]
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        self.shape = shape
        self.indices = (uniq % shape[1]).astype(np.int32)
        counts = np.bincount(uniq // shape[1], minlength=shape[0])
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.nnz = len(uniq)

    def __call__(self, values):
        data = np.bincount(self.inverse, weights=values[self.keep], minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


# ------------------------------------------------------------- projectors


def _shape_key(g):
    rel = (g.vertices - g.centroid) / g.diameter
    return (len(rel), round(g.diameter, 14), tuple(np.rint(rel * 1e12).astype(np.int64).ravel()))


def compute_projectors(mesh, cache=True):
    """Local projectors of every cell.

    With ``cache`` on, cells that are translates of an earlier cell (same
    vertex loop relative to the centroid, to 1e-12 relative) reuse its
    matrices; all local matrices are translation invariant.
    """
    seen = {}
    out = []
    for k in range(mesh.n_cells):
        g = mesh.geometry(k)
        key = _shape_key(g) if cache else None
        if key is not None and key in seen:
            out.append(dataclasses.replace(seen[key], index=k, centroid=g.centroid))
            continue
        P = local_projectors(g)
        if key is not None:
            seen[key] = P
        out.append(P)
    if cache:
        log.debug("projector cache: %d distinct shapes for %d cells", len(seen), mesh.n_cells)
    return out


# ------------------------------------------------------------- global system


@dataclass
class CellGroup:
    """Cells with the same vertex count, stacked for batched kernels."""

    cells: np.ndarray
    dofs: np.ndarray  # (nc, nk)
    pi0_star: np.ndarray  # (nc, 12, nk)
    pi_grad_star: np.ndarray  # (nc, 12, nk)
    T: np.ndarray  # (nc, 12, 12, 12)
    T_rts: np.ndarray = None  # T with the last two axes swapped, contiguous

    def __post_init__(self):
        if self.T_rts is None:
            self.T_rts = np.ascontiguousarray(self.T.transpose(0, 1, 3, 2))


@dataclass(eq=False)
class GlobalSystem:
    mesh: object
    dofmap: DofMap
    projectors: list
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    d: np.ndarray
    F: np.ndarray
    g: np.ndarray  # prescribed boundary values (zero at free DoFs)
    groups: list
    scatter: BlockScatter  # velocity blocks in group order
    scatter_free: BlockScatter  # the same, restricted to free rows/columns
    A_values: np.ndarray  # local stiffness values in scatter order
    info: dict = field(default_factory=dict)
    _mass_values: np.ndarray | None = None

    @property
    def N(self):
        return self.dofmap.N

    @property
    def M(self):
        return self.dofmap.M

    @property
    def h(self):
        """Largest cell diameter."""
        return self.mesh.h

    @property
    def mesh_size(self):
        return mesh_size(self.mesh)

    def local_values(self, blocks_by_cell):
        return np.concatenate([np.stack([blocks_by_cell[k] for k in grp.cells]).ravel() for grp in self.groups])

    def mass_values(self):
        if self._mass_values is None:
            self._mass_values = self.local_values([local_mass(P) for P in self.projectors])
        return self._mass_values

    def mass_matrix(self):
        return self.scatter(self.mass_values())

    def load(self, f):
        F = np.zeros(self.N)
        if f is None:
            return F
        for P, dofs in zip(self.projectors, self.dofmap.cell_dofs):
            np.add.at(F, dofs, load_vector(P, f))
        return F

    def nonlinear_values(self, chi, skew_form=True):
        """Local values of the convection matrix N2(chi), in scatter order."""
        out = []
        for grp in self.groups:
            x = chi[grp.dofs]  # (nc, nk)
            nc = len(x)
            d = np.matmul(grp.pi0_star, x[:, :, None])  # (nc, 12, 1)
            Td = np.matmul(grp.T_rts.reshape(nc, 144, 12), d).reshape(nc, 12, 12)  # sum_s T[r, s, t] d_s
            X = np.matmul(Td, grp.pi0_star)  # (nc, r, i)
            N2 = np.matmul(X.transpose(0, 2, 1), grp.pi_grad_star)  # (nc, i, j)
            if skew_form:
                N2 = 0.5 * (N2 - N2.transpose(0, 2, 1))
            out.append(N2.ravel())
        return np.concatenate(out)

    def local_matvec(self, values, x):
        """sum_K V_K x_K for local values in scatter order, without
        assembling the global matrix."""
        y = np.zeros(self.N)
        start = 0
        for grp in self.groups:
            nc, nk = grp.dofs.shape
            V = values[start: start + nc * nk * nk].reshape(nc, nk, nk)
            start += nc * nk * nk
            yl = np.matmul(V, x[grp.dofs][:, :, None])[:, :, 0]
            y += np.bincount(grp.dofs.ravel(), weights=yl.ravel(), minlength=self.N)
        return y

    def nonlinear_matrix(self, chi, skew_form=True):
        return self.scatter(self.nonlinear_values(chi, skew_form))

    def pressure_basis(self, k):
        P = self.projectors[k]
        return ScaledMonomialBasis(P.centroid, P.hK, 1)

    def export_matrices(self, directory):
        from pathlib import Path

        from scipy.io import mmwrite

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in ("A", "B", "C"):
            mmwrite(str(directory / f"{name}.mtx"), getattr(self, name))
        return [directory / f"{n}.mtx" for n in ("A", "B", "C")]


def boundary_values(mesh, dofmap, boundary, flux_correction=True):
    """Prescribed DoF values from a closure ``boundary(points) -> (n, 2)``.

    With ``flux_correction`` the midpoint values are shifted along the
    outward normal by a single constant so that the discrete boundary flux
    (Simpson on every edge) is exactly zero.
    """
    g = np.zeros(dofmap.N)
    info = {"boundary_flux": 0.0, "flux_shift": 0.0}
    if boundary is None:
        return g, info
    bv = np.flatnonzero(mesh.boundary_vertex)
    be = np.flatnonzero(mesh.boundary_edge)
    gv = np.asarray(boundary(mesh.vertices[bv]), dtype=float).reshape(len(bv), 2)
    gm = np.asarray(boundary(mesh.edge_midpoints[be]), dtype=float).reshape(len(be), 2)
    if not (np.all(np.isfinite(gv)) and np.all(np.isfinite(gm))):
        raise ValueError("boundary data is not finite")
    vals = np.zeros((mesh.n_vertices, 2))
    vals[bv] = gv
    mids = np.zeros((mesh.n_edges, 2))
    mids[be] = gm

    # outward normals and lengths of boundary edges from their owning cell
    normals = np.zeros((mesh.n_edges, 2))
    for e in be:
        k = mesh.edge_cells[e, 0]
        cell = mesh.cells[k]
        j = int(np.flatnonzero(mesh.cell_edges[k] == e)[0])
        a, b = mesh.vertices[cell[j]], mesh.vertices[cell[(j + 1) % len(cell)]]
        t = b - a
        normals[e] = np.array([t[1], -t[0]])  # scaled by the length
    ea, eb = mesh.edges[be, 0], mesh.edges[be, 1]
    nrm = normals[be]
    flux = float(np.sum(((vals[ea] + vals[eb]) / 6 + 4 * mids[be] / 6) * nrm))
    info["boundary_flux"] = flux
    if flux_correction and len(be):
        lengths = np.hypot(nrm[:, 0], nrm[:, 1])
        c = flux / (2.0 / 3.0 * lengths.sum())
        mids[be] -= c * nrm / lengths[:, None]
        info["flux_shift"] = c
    for comp in (0, 1):
        g[dofmap.vertex_dof(bv, comp)] = vals[bv, comp]
        g[dofmap.edge_dof(be, comp)] = mids[be, comp]
    return g, info


def assemble_global(mesh, boundary=None, forcing=None, flux_correction=True, cache=True):
    """Assemble A, B, C, d, F and the Dirichlet data on ``mesh``."""
    dofmap = build_dofmap(mesh)
    projectors = compute_projectors(mesh, cache=cache)
    N, M = dofmap.N, dofmap.M

    by_nv = {}
    for k, P in enumerate(projectors):
        by_nv.setdefault(P.nv, []).append(k)
    groups = []
    for nv in sorted(by_nv):
        cells = np.array(by_nv[nv])
        groups.append(
            CellGroup(
                cells=cells,
                dofs=np.stack([dofmap.cell_dofs[k] for k in cells]),
                pi0_star=np.stack([projectors[k].pi0_star for k in cells]),
                pi_grad_star=np.stack([projectors[k].pi_grad_star for k in cells]),
                T=np.stack([projectors[k].T for k in cells]),
            )
        )
    order = np.concatenate([grp.cells for grp in groups])
    maps = [dofmap.cell_dofs[k] for k in order]
    scatter = BlockScatter(maps, maps, (N, N))
    free_index = -np.ones(N, dtype=np.int64)
    free = dofmap.free
    free_index[free] = np.arange(len(free))
    fmaps = [free_index[m] for m in maps]
    scatter_free = BlockScatter(fmaps, fmaps, (len(free), len(free)))

    A_loc = [local_stiffness(P) for P in projectors]
    A_values = np.concatenate([np.stack([A_loc[k] for k in grp.cells]).ravel() for grp in groups])
    A = scatter(A_values)

    rows, cols, vals = [], [], []
    for k, P in enumerate(projectors):
        Bk = local_divergence(P)
        pd = dofmap.pressure_dofs(k)
        rows.append(np.repeat(dofmap.cell_dofs[k], 3))
        cols.append(np.tile(pd, P.nk))
        vals.append(Bk.ravel())
    B = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, M))
    C = sp.block_diag([pressure_mass(P) for P in projectors], format="csr")
    d = np.concatenate([constraint_block(P) for P in projectors])

    g, binfo = boundary_values(mesh, dofmap, boundary, flux_correction)
    system = GlobalSystem(
        mesh=mesh,
        dofmap=dofmap,
        projectors=projectors,
        A=A,
        B=B,
        C=C,
        d=d,
        F=np.zeros(N),
        g=g,
        groups=groups,
        scatter=scatter,
        scatter_free=scatter_free,
        A_values=A_values,
        info=dict(binfo, n_velocity=N, n_pressure=M, h=mesh.h),
    )
    system.F = system.load(forcing)
    return system


@dataclass
class DirichletSplit:
    free: np.ndarray
    fixed: np.ndarray
    g: np.ndarray  # full-length prescribed values

    def restrict(self, K):
        """(K_ff, K_fd) blocks of a square velocity matrix."""
        K = K.tocsr()
        return K[self.free][:, self.free], K[self.free][:, self.fixed]

    def reduce_rhs(self, K, rhs):
        """rhs_f - K_fd g_d."""
        return rhs[self.free] - (K @ self.g)[self.free]

    def lift(self, x_free):
        x = self.g.copy()
        x[self.free] = x_free
        return x


def apply_dirichlet(system):
    return DirichletSplit(system.dofmap.free, system.dofmap.fixed, system.g)
