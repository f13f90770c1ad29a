import json

import numpy as np
import pytest

from vemflow.mesh import (
    MeshError,
    PolygonalMesh,
    element_geometry,
    generate_structured,
    generate_voronoi,
    load_mesh,
    mesh_size,
    parse_mesh_spec,
    save_mesh,
    validate_mesh,
)

UNIT = {"vertices": [[0, 0], [1, 0], [1, 1], [0, 1]], "cells": [[0, 1, 2, 3]]}


def _write(tmp_path, data, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_load_unit_square(tmp_path):
    mesh = load_mesh(_write(tmp_path, UNIT))
    g = mesh.geometry(0)
    assert mesh.n_cells == 1
    assert g.area == pytest.approx(1.0)
    assert g.diameter == pytest.approx(np.sqrt(2))


def test_clockwise_cell_rejected(tmp_path):
    data = dict(UNIT, cells=[[0, 3, 2, 1]])
    with pytest.raises(MeshError, match="clockwise"):
        load_mesh(_write(tmp_path, data))


def test_two_cell_split_counts():
    v = [[0, 0], [0.5, 0], [1, 0], [1, 1], [0.5, 1], [0, 1]]
    mesh = PolygonalMesh(v, [[0, 1, 4, 5], [1, 2, 3, 4]])
    assert mesh.n_edges == 7
    assert int(mesh.boundary_edge.sum()) == 6
    assert int((~mesh.boundary_edge).sum()) == 1


def test_bad_inputs():
    with pytest.raises(MeshError):
        PolygonalMesh([[0, 0], [1, 0]], [[0, 1]])
    with pytest.raises(MeshError, match="missing vertex"):
        PolygonalMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 5]])
    with pytest.raises(MeshError, match="zero area"):
        PolygonalMesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])
    with pytest.raises(MeshError, match="not a simple"):
        PolygonalMesh([[0, 0], [2, 0], [0, 1], [1, 2]], [[0, 1, 2, 3]])
    with pytest.raises(MeshError, match="non-finite"):
        PolygonalMesh([[0, 0], [1, np.nan], [0, 1]], [[0, 1, 2]])


def test_unparseable_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(MeshError, match="cannot parse"):
        load_mesh(p)


def test_missing_file_names_path(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(FileNotFoundError, match="nope.json"):
        parse_mesh_spec(str(missing))


def test_save_load_roundtrip(tmp_path):
    mesh = generate_voronoi(n_cells=16, lloyd_iterations=10)
    save_mesh(mesh, tmp_path / "v.json")
    back = load_mesh(tmp_path / "v.json")
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    assert all(np.array_equal(a, b) for a, b in zip(back.cells, mesh.cells))


def test_structured_counts():
    m = generate_structured(2, 2, "quad")
    assert (m.n_cells, m.n_vertices) == (4, 9)
    assert generate_structured(64, 64, "triangle").n_cells == 8192


def test_single_quad_matches_file(tmp_path):
    a = generate_structured(1, 1, "quad")
    b = load_mesh(_write(tmp_path, UNIT))
    np.testing.assert_array_equal(a.vertices[a.cells[0]], b.vertices[b.cells[0]])


def test_structured_rejects_bad_args():
    with pytest.raises(MeshError):
        generate_structured(0, 3)
    with pytest.raises(MeshError):
        generate_structured(2, 2, "hex")


def test_voronoi_partition():
    m = generate_voronoi(n_cells=32, lloyd_iterations=100, seed=1)
    assert m.n_cells == 32
    assert m.cell_areas().sum() == pytest.approx(1.0, abs=1e-10)


def test_voronoi_512_size():
    m = generate_voronoi(n_cells=512, lloyd_iterations=100, seed=1)
    assert 0.03 <= m.h <= 0.07
    # the tabulated h of the 512-cell mesh is sqrt(|Omega| / n_cells)
    assert validate_mesh(m).h_mean == pytest.approx(4.419e-2, rel=0.2)


def test_voronoi_two_cells_one_chord():
    m = generate_voronoi(n_cells=2, lloyd_iterations=0, seed=1)
    assert m.n_cells == 2
    assert int((~m.boundary_edge).sum()) == 1
    assert validate_mesh(m).all_star


def test_voronoi_seed_is_reproducible():
    a = generate_voronoi(n_cells=20, lloyd_iterations=5, seed=3)
    b = generate_voronoi(n_cells=20, lloyd_iterations=5, seed=3)
    np.testing.assert_array_equal(a.vertices, b.vertices)


def test_voronoi_on_offset_domain():
    dom = ((-0.5, 1.0), (-0.5, 1.5))
    m = generate_voronoi(dom, n_cells=40, lloyd_iterations=20)
    assert m.cell_areas().sum() == pytest.approx(3.0, abs=1e-10)
    (x0, x1), (y0, y1) = m.bounding_box()
    assert (x0, x1, y0, y1) == pytest.approx((-0.5, 1.0, -0.5, 1.5))


def test_geometry_unit_square():
    g = element_geometry(generate_structured(1, 1), 0)
    np.testing.assert_allclose(g.centroid, [0.5, 0.5])
    assert g.area == 1.0
    assert g.diameter == pytest.approx(np.sqrt(2))
    np.testing.assert_allclose(g.normals, [[0, -1], [1, 0], [0, 1], [-1, 0]], atol=1e-15)


def test_geometry_right_triangle():
    m = PolygonalMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    g = m.geometry(0)
    assert g.area == pytest.approx(0.5)
    np.testing.assert_allclose(g.centroid, [1 / 3, 1 / 3])


def test_geometry_regular_hexagon():
    t = np.arange(6) * np.pi / 3
    m = PolygonalMesh(np.column_stack([np.cos(t), np.sin(t)]), [list(range(6))])
    g = m.geometry(0)
    assert g.area == pytest.approx(3 * np.sqrt(3) / 2, abs=1e-12)
    np.testing.assert_allclose(g.centroid, [0, 0], atol=1e-15)
    assert g.diameter == pytest.approx(2.0)


def test_star_proxy_structured():
    assert validate_mesh(generate_structured(3, 3)).all_star


def test_star_proxy_nonconvex_cell():
    # an arrow-shaped pentagon, star-shaped about its centroid
    v = [[0, 0], [2, 0], [2, 2], [1, 1.5], [0, 2]]
    rep = validate_mesh(PolygonalMesh(v, [[0, 1, 2, 3, 4]]))
    assert rep.all_star


def test_mesh_size():
    assert mesh_size(generate_structured(4, 4)) == pytest.approx(0.25)


def test_parse_spec_forms():
    assert parse_mesh_spec("quad:3x2").n_cells == 6
    assert parse_mesh_spec("triangle:2").n_cells == 8
    assert parse_mesh_spec("voronoi:10", lloyd_iterations=5).n_cells == 10
