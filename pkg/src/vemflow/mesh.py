"""Polygonal meshes: representation, generators, JSON I/O and element geometry."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import QhullError, Voronoi

log = logging.getLogger(__name__)


class MeshError(ValueError):
    """Raised for malformed or invalid mesh input."""


def _signed_area(xy):
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _segments_cross(p1, p2, q1, q2):
    # proper intersection of two segments that share no endpoint
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _is_simple(xy):
    n = len(xy)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(xy[i], xy[(i + 1) % n], xy[j], xy[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class ElementGeometry:
    """Geometric data of one polygonal cell, edges in loop order."""

    index: int
    vertices: np.ndarray  # (nv, 2), counter-clockwise
    centroid: np.ndarray
    diameter: float
    area: float
    edge_lengths: np.ndarray  # (nv,), edge j runs from vertex j to vertex j+1
    normals: np.ndarray  # (nv, 2) outward unit normals
    midpoints: np.ndarray  # (nv, 2)

    @property
    def n_vertices(self):
        return len(self.vertices)


@dataclass(eq=False)
class PolygonalMesh:
    """A conforming polygonal mesh.

    ``cells`` are counter-clockwise vertex loops. Edges are derived on
    construction: ``edges[e]`` holds the two endpoint indices (smaller
    first), ``edge_cells[e]`` the owning cells (``-1`` on the boundary) and
    ``cell_edges[c][j]`` the global index of local edge ``j`` of cell ``c``
    (from local vertex ``j`` to ``j+1``).
    """

    vertices: np.ndarray
    cells: list
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("vertices contain non-finite coordinates")
        self.cells = [np.asarray(c, dtype=np.int64) for c in self.cells]
        if not self.cells:
            raise MeshError("mesh has no cells")
        self._check_cells()
        self._build_edges()
        self.vertices.setflags(write=False)

    def _check_cells(self):
        nvert = len(self.vertices)
        for k, c in enumerate(self.cells):
            if c.ndim != 1 or len(c) < 3:
                raise MeshError(f"cell {k} has fewer than 3 vertices")
            if c.min() < 0 or c.max() >= nvert:
                raise MeshError(f"cell {k} references a missing vertex")
            if len(np.unique(c)) != len(c):
                raise MeshError(f"cell {k} repeats a vertex")
            xy = self.vertices[c]
            area = _signed_area(xy)
            if area < 0:
                raise MeshError(f"cell {k} is oriented clockwise")
            if area == 0:
                raise MeshError(f"cell {k} is degenerate (zero area)")
            if len(c) > 3 and not _is_simple(xy):
                raise MeshError(f"cell {k} is not a simple polygon")

    def _build_edges(self):
        lookup = {}
        edges, owners, cell_edges = [], [], []
        for k, c in enumerate(self.cells):
            local = []
            for a, b in zip(c, np.roll(c, -1)):
                key = (min(a, b), max(a, b))
                e = lookup.get(key)
                if e is None:
                    e = len(edges)
                    lookup[key] = e
                    edges.append(key)
                    owners.append([k, -1, int(a)])
                else:
                    if owners[e][1] != -1:
                        raise MeshError(f"edge {key} is shared by more than two cells (cell {k})")
                    if owners[e][2] == a:
                        raise MeshError(
                            f"cell {k} traverses edge {key} in the same direction as cell {owners[e][0]}"
                        )
                    owners[e][1] = k
                local.append(e)
            cell_edges.append(np.array(local, dtype=np.int64))
        self.edges = np.array(edges, dtype=np.int64)
        self.edge_cells = np.array([o[:2] for o in owners], dtype=np.int64)
        self.cell_edges = cell_edges
        self.edge_midpoints = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        self.boundary_edge = self.edge_cells[:, 1] < 0
        self.boundary_vertex = np.zeros(len(self.vertices), dtype=bool)
        self.boundary_vertex[self.edges[self.boundary_edge].ravel()] = True

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_cells(self):
        return len(self.cells)

    def cell_areas(self):
        return np.array([_signed_area(self.vertices[c]) for c in self.cells])

    def geometry(self, k):
        return element_geometry(self, k)

    def geometries(self):
        return [element_geometry(self, k) for k in range(self.n_cells)]

    @property
    def h(self):
        """Largest cell diameter."""
        return max(_diameter(self.vertices[c]) for c in self.cells)

    def bounding_box(self):
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return (lo[0], hi[0]), (lo[1], hi[1])


def _diameter(xy):
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


def element_geometry(mesh, k):
    if not 0 <= k < mesh.n_cells:
        raise IndexError(f"cell index {k} out of range")
    xy = mesh.vertices[mesh.cells[k]]
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    centroid = np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * area)
    t = np.stack([xn - x, yn - y], axis=1)
    lengths = np.hypot(t[:, 0], t[:, 1])
    normals = np.stack([t[:, 1], -t[:, 0]], axis=1) / lengths[:, None]
    mids = 0.5 * (xy + np.roll(xy, -1, axis=0))
    return ElementGeometry(
        index=k,
        vertices=xy,
        centroid=centroid,
        diameter=_diameter(xy),
        area=float(area),
        edge_lengths=lengths,
        normals=normals,
        midpoints=mids,
    )


# ---------------------------------------------------------------- JSON I/O


def load_mesh(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
        vertices = data["vertices"]
        cells = data["cells"]
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MeshError(f"cannot parse mesh file {path}: {exc}") from exc
    return PolygonalMesh(np.array(vertices, dtype=float).reshape(-1, 2), cells)


def save_mesh(mesh, path):
    data = {
        "vertices": [[float(x), float(y)] for x, y in mesh.vertices],
        "cells": [[int(i) for i in c] for c in mesh.cells],
    }
    Path(path).write_text(json.dumps(data))


# -------------------------------------------------------------- generators


def _as_rect(domain):
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"empty rectangle {domain}")
    return float(x0), float(x1), float(y0), float(y1)


def generate_structured(nx, ny, kind="quad", domain=((0.0, 1.0), (0.0, 1.0))):
    """Uniform nx-by-ny grid of rectangles, or triangles split along the
    lower-left to upper-right diagonal."""
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    if kind not in ("quad", "triangle"):
        raise MeshError(f"unknown structured mesh kind {kind!r}")
    x0, x1, y0, y1 = _as_rect(domain)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if kind == "quad":
                cells.append([a, b, c, d])
            else:
                cells.append([a, b, c])
                cells.append([a, c, d])
    return PolygonalMesh(vertices, cells, info={"generator": f"{kind}:{nx}x{ny}"})


def _reflect(points, rect):
    x0, x1, y0, y1 = rect
    px, py = points[:, 0], points[:, 1]
    return np.concatenate(
        [
            points,
            np.stack([2 * x0 - px, py], 1),
            np.stack([2 * x1 - px, py], 1),
            np.stack([px, 2 * y0 - py], 1),
            np.stack([px, 2 * y1 - py], 1),
        ]
    )


def _clipped_regions(seeds, rect):
    """Voronoi cells of ``seeds`` clipped to ``rect``.

    Mirroring the seeds across the four sides makes each original cell
    bounded by exactly the rectangle's half-planes.
    """
    vor = Voronoi(_reflect(seeds, rect))
    regions = []
    for k in range(len(seeds)):
        reg = vor.regions[vor.point_region[k]]
        if not reg or -1 in reg:
            raise MeshError(f"unbounded Voronoi region for seed {k}")
        regions.append(np.array(reg, dtype=np.int64))
    return vor.vertices, regions


def _polygon_centroid(xy):
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def _voronoi_mesh(seeds, rect):
    x0, x1, y0, y1 = rect
    scale = max(x1 - x0, y1 - y0)
    verts, regions = _clipped_regions(seeds, rect)
    used = np.unique(np.concatenate(regions))
    pts = verts[used].copy()
    tol = 1e-12 * scale
    for col, lo, hi in ((0, x0, x1), (1, y0, y1)):
        pts[np.abs(pts[:, col] - lo) < tol, col] = lo
        pts[np.abs(pts[:, col] - hi) < tol, col] = hi
    # merge (nearly) coincident Voronoi vertices produced by cocircular seeds
    merge_tol = 1e-9 * scale
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    new_id = np.full(len(pts), -1, dtype=np.int64)
    kept = []
    for i in order:
        if new_id[i] >= 0:
            continue
        new_id[i] = len(kept)
        kept.append(pts[i])
        close = np.where(np.abs(pts[:, 0] - pts[i, 0]) < merge_tol)[0]
        for j in close:
            if new_id[j] < 0 and np.hypot(*(pts[j] - pts[i])) < merge_tol:
                new_id[j] = new_id[i]
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = new_id
    vertices = np.array(kept)
    cells = []
    for reg in regions:
        loop = remap[reg]
        keep = loop != np.roll(loop, 1)
        loop = loop[keep]
        if len(loop) < 3:
            raise MeshError("degenerate Voronoi cell after vertex merging")
        if _signed_area(vertices[loop]) < 0:
            loop = loop[::-1]
        cells.append(loop)
    return vertices, cells


def _collapse_short_edges(vertices, cells, rect, threshold):
    """Merge the endpoints of edges shorter than ``threshold``.

    Boundary vertices keep their side (corners never move); an edge joining
    two different sides is left alone.
    """
    x0, x1, y0, y1 = rect
    vertices = vertices.copy()

    def sides(p):
        return frozenset(
            s for s, hit in enumerate((p[0] == x0, p[0] == x1, p[1] == y0, p[1] == y1)) if hit
        )

    target = np.arange(len(vertices))
    moved = np.zeros(len(vertices), dtype=bool)
    for c in cells:
        for a, b in zip(c, np.roll(c, -1)):
            if moved[a] or moved[b] or np.hypot(*(vertices[a] - vertices[b])) >= threshold:
                continue
            sa, sb = sides(vertices[a]), sides(vertices[b])
            if sa and sb and not (sa <= sb or sb <= sa):
                continue
            if len(sa) > len(sb):
                keep, drop = a, b
            elif len(sb) > len(sa):
                keep, drop = b, a
            else:
                keep, drop = min(a, b), max(a, b)
                vertices[keep] = 0.5 * (vertices[a] + vertices[b])
            target[drop] = keep
            moved[a] = moved[b] = True
    used = np.unique(target)
    renum = np.full(len(vertices), -1, dtype=np.int64)
    renum[used] = np.arange(len(used))
    out = []
    for c in cells:
        loop = renum[target[c]]
        loop = loop[loop != np.roll(loop, 1)]
        out.append(loop)
    return vertices[used], out


def generate_voronoi(
    domain=((0.0, 1.0), (0.0, 1.0)), n_cells=32, lloyd_iterations=100, seed=1, collapse_tol=0.1
):
    """Centroidal Voronoi tessellation of a rectangle by Lloyd relaxation.

    Edges shorter than ``collapse_tol * sqrt(|domain| / n_cells)`` are
    collapsed afterwards; pass ``collapse_tol=0`` to keep the raw diagram.
    """
    if n_cells < 2:
        raise MeshError("n_cells must be at least 2")
    rect = _as_rect(domain)
    x0, x1, y0, y1 = rect
    rng = np.random.default_rng(seed)
    seeds = np.array([x0, y0]) + rng.random((n_cells, 2)) * np.array([x1 - x0, y1 - y0])
    h_typ = np.sqrt((x1 - x0) * (y1 - y0) / n_cells)
    retries = 0
    for _ in range(lloyd_iterations):
        verts, regions = _clipped_regions(seeds, rect)
        seeds = np.array([_polygon_centroid(verts[r]) for r in regions])
    while True:
        try:
            vertices, cells = _voronoi_mesh(seeds, rect)
            if collapse_tol > 0:
                collapsed = _collapse_short_edges(vertices, cells, rect, collapse_tol * h_typ)
                try:
                    mesh = PolygonalMesh(*collapsed)
                except MeshError:
                    log.warning("edge collapse produced an invalid mesh; keeping raw diagram")
                    mesh = PolygonalMesh(vertices, cells)
            else:
                mesh = PolygonalMesh(vertices, cells)
            break
        except (MeshError, QhullError) as exc:
            retries += 1
            if retries > 10:
                raise MeshError(f"Voronoi generation failed after {retries} perturbations: {exc}")
            log.warning("degenerate Voronoi configuration (%s); perturbing seeds", exc)
            seeds = seeds + 1e-12 * h_typ * rng.standard_normal(seeds.shape)
    mesh.info.update(
        {
            "generator": "voronoi",
            "n_cells": n_cells,
            "lloyd_iterations": lloyd_iterations,
            "seed": seed,
            "collapse_tol": collapse_tol,
            "perturbation_retries": retries,
        }
    )
    return mesh


def parse_mesh_spec(spec, domain=((0.0, 1.0), (0.0, 1.0)), seed=1, lloyd_iterations=100):
    """Build a mesh from a short spec: ``quad:4x4``, ``triangle:64x64``,
    ``voronoi:32`` or a path to a JSON mesh file."""
    kind, _, arg = spec.partition(":")
    if kind in ("quad", "triangle") and arg:
        nx, _, ny = arg.partition("x")
        return generate_structured(int(nx), int(ny or nx), kind, domain)
    if kind == "voronoi" and arg:
        return generate_voronoi(domain, int(arg), lloyd_iterations, seed)
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {spec}")
    return load_mesh(path)


# -------------------------------------------------------------- diagnostics


@dataclass
class MeshReport:
    h: float  # max cell diameter
    h_mean: float  # sqrt(|Omega| / n_cells)
    n_cells: int
    area: float
    vertex_ratio: np.ndarray  # per cell: min vertex distance / h_K
    star_proxy: np.ndarray  # per cell: centroid fan strictly positive

    @property
    def all_star(self):
        return bool(self.star_proxy.all())

    @property
    def min_vertex_ratio(self):
        return float(self.vertex_ratio.min())


def validate_mesh(mesh):
    ratios = np.empty(mesh.n_cells)
    star = np.empty(mesh.n_cells, dtype=bool)
    hs = np.empty(mesh.n_cells)
    areas = np.empty(mesh.n_cells)
    for k in range(mesh.n_cells):
        g = element_geometry(mesh, k)
        xy = g.vertices
        d = np.sqrt(((xy[:, None] - xy[None]) ** 2).sum(-1))
        d[np.diag_indices_from(d)] = np.inf
        ratios[k] = d.min() / g.diameter
        a, b = xy - g.centroid, np.roll(xy, -1, axis=0) - g.centroid
        star[k] = bool(np.all(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] > 0))
        hs[k] = g.diameter
        areas[k] = g.area
    total = float(areas.sum())
    return MeshReport(
        h=float(hs.max()),
        h_mean=float(np.sqrt(total / mesh.n_cells)),
        n_cells=mesh.n_cells,
        area=total,
        vertex_ratio=ratios,
        star_proxy=star,
    )


def mesh_size(mesh):
    """sqrt(|Omega| / n_cells), the mesh size used for stopping and rates."""
    return float(np.sqrt(mesh.cell_areas().sum() / mesh.n_cells))
