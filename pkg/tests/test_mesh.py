import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoscale_ma.errors import InvalidArgumentError, MeshError, OutOfDomainError
from twoscale_ma.mesh import (Disc, Mesh, Polygon, UnitSquare, barycentric, build_disc_mesh,
                              build_polygon_mesh, build_square_mesh, distance_to_boundary,
                              hausdorff_distance, locate_point, locate_points,
                              nearest_boundary_point)


def test_square_m2_counts():
    mesh = build_square_mesh(2)
    assert mesh.n_vertices == 9
    assert mesh.n_triangles == 8
    assert len(mesh.interior_nodes) == 1
    np.testing.assert_array_equal(mesh.vertices[mesh.interior_nodes[0]], [0.5, 0.5])
    assert mesh.h == pytest.approx(math.sqrt(2) / 2, abs=1e-15)


def test_square_m4_counts():
    mesh = build_square_mesh(4)
    assert (mesh.n_vertices, mesh.n_triangles, len(mesh.interior_nodes)) == (25, 32, 9)


def test_square_rejects_small_m():
    with pytest.raises(InvalidArgumentError):
        build_square_mesh(1)


def test_square_diagonals_have_positive_slope():
    mesh = build_square_mesh(5)
    v = mesh.vertices
    for tri in mesh.triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            d = v[tri[b]] - v[tri[a]]
            if d[0] != 0 and d[1] != 0:
                assert d[0] * d[1] > 0


@pytest.mark.parametrize("mesh", [build_square_mesh(6), build_disc_mesh(Disc(), 2),
                                  build_polygon_mesh(Polygon(((0, 0), (2, 0), (1, 1.5))), 2)])
def test_partition_and_orientation(mesh):
    both = np.concatenate([mesh.interior_nodes, mesh.boundary_nodes])
    np.testing.assert_array_equal(np.sort(both), np.arange(mesh.n_vertices))
    assert np.all(mesh.triangle_areas() > 0)


def test_disc_level1_boundary():
    mesh = build_disc_mesh(Disc((0.0, 0.0), 1.0), 1)
    assert len(mesh.boundary_nodes) == 12
    r = np.linalg.norm(mesh.vertices[mesh.boundary_nodes], axis=1)
    np.testing.assert_allclose(r, 1.0, atol=1e-12)


def test_disc_level2_on_circle():
    mesh = build_disc_mesh(Disc(), 2)
    r = np.linalg.norm(mesh.vertices[mesh.boundary_nodes], axis=1)
    assert np.max(np.abs(r - 1.0)) <= 1e-12


def test_disc_off_centre_on_circle():
    dom = Disc((0.3, -1.0), 2.5)
    mesh = build_disc_mesh(dom, 3)
    r = np.linalg.norm(mesh.vertices[mesh.boundary_nodes] - [0.3, -1.0], axis=1)
    assert np.max(np.abs(r - 2.5)) <= 1e-12 * 2.5


def test_disc_hausdorff_matches_sagitta():
    # chord of central angle pi/6 sits 1 - cos(pi/12) inside the unit circle
    mesh = build_disc_mesh(Disc(), 1)
    assert hausdorff_distance(mesh) == pytest.approx(1 - math.cos(math.pi / 12), abs=1e-12)
    assert hausdorff_distance(build_square_mesh(4)) == 0.0


@pytest.mark.parametrize("level", [1, 2, 3])
def test_disc_area_is_inscribed_polygon(level):
    n = 6 * 2 ** level
    mesh = build_disc_mesh(Disc(), level)
    polygon = 0.5 * n * math.sin(2 * math.pi / n)
    assert mesh.triangle_areas().sum() == pytest.approx(polygon, rel=1e-10)


def test_square_area():
    assert build_square_mesh(7).triangle_areas().sum() == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("mesh", [build_square_mesh(m) for m in (2, 4, 8, 16, 32, 64)]
                         + [build_disc_mesh(Disc(), k) for k in (1, 2, 3, 4)])
def test_shape_regularity_and_quasi_uniformity(mesh):
    assert mesh.shape_regularity <= 8
    assert mesh.h / mesh.h_min <= 4


def test_distance_to_boundary_examples():
    mesh = build_square_mesh(4)
    assert distance_to_boundary(mesh, (0.5, 0.5)) == pytest.approx(0.5)
    assert distance_to_boundary(mesh, (0.25, 0.5)) == pytest.approx(0.25)
    assert distance_to_boundary(mesh, (0.3, 0.0)) == 0.0
    with pytest.raises(OutOfDomainError):
        distance_to_boundary(mesh, (1.5, 0.5))


def test_locate_vertex_and_centroid():
    mesh = build_square_mesh(4)
    t, lam = locate_point(mesh, mesh.vertices[7])
    k = list(mesh.triangles[t]).index(7)
    np.testing.assert_allclose(lam, np.eye(3)[k], atol=1e-15)
    # lowest-index tie-break among the triangles sharing the vertex
    star = [s for s, tri in enumerate(mesh.triangles) if 7 in tri]
    assert t == min(star)
    c = mesh.vertices[mesh.triangles[13]].mean(axis=0)
    t, lam = locate_point(mesh, c)
    assert t == 13
    np.testing.assert_allclose(lam, [1 / 3] * 3, atol=1e-14)
    assert locate_point(mesh, (2.0, 2.0)) is None


def test_locate_shared_edge_lowest_index():
    mesh = build_square_mesh(2)
    # midpoint of the diagonal of the first cell lies on triangles 0 and 1
    t, lam = locate_point(mesh, (0.25, 0.25))
    assert t == 0
    assert lam.min() >= -1e-12 and lam.sum() == pytest.approx(1.0)


def test_locate_every_vertex_and_centroid_disc():
    mesh = build_disc_mesh(Disc(), 3)
    pts = np.vstack([mesh.vertices, mesh.vertices[mesh.triangles].mean(axis=1)])
    tri, _ = locate_points(mesh, pts)
    assert np.all(tri >= 0)
    for p in pts[::17]:
        assert locate_point(mesh, p) is not None


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_batch_and_walk_location_agree(x, y):
    mesh = build_square_mesh(5)
    p = np.array([x, y])
    t, lam = locate_point(mesh, p)
    tb, lb = locate_points(mesh, p[None])
    assert tb[0] == t
    np.testing.assert_allclose(lb[0], lam, atol=1e-12)
    assert lam.min() >= -1e-12 and lam.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(lam @ mesh.vertices[mesh.triangles[t]], p, atol=1e-12)


@pytest.mark.parametrize("mesh", [build_square_mesh(8), build_disc_mesh(Disc(), 3)])
def test_ball_around_node_inside_meshed_region(mesh):
    delta = 0.3
    phi = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    ring = np.column_stack([np.cos(phi), np.sin(phi)])
    for i in mesh.interior_nodes:
        d = min(delta, distance_to_boundary(mesh, mesh.vertices[i]))
        tri, _ = locate_points(mesh, mesh.vertices[i] + d * ring)
        assert np.all(tri >= 0)


def test_nearest_boundary_point_square():
    mesh = build_square_mesh(4)
    proj, k, t = nearest_boundary_point(mesh, np.array([0.3, 0.1]))
    np.testing.assert_allclose(proj, [0.3, 0.0], atol=1e-15)
    a, b = mesh.boundary_edges[k]
    np.testing.assert_allclose((1 - t) * mesh.vertices[a] + t * mesh.vertices[b], proj)


def test_barycentric_reconstructs_point():
    mesh = build_square_mesh(3)
    lam = barycentric(mesh, 4, (0.5, 0.4))
    assert lam.sum() == pytest.approx(1.0)


def test_polygon_validation():
    with pytest.raises(InvalidArgumentError):
        Polygon(((0, 0), (0, 1), (1, 0)))  # clockwise
    with pytest.raises(InvalidArgumentError):
        Polygon(((0, 0), (1, 0), (2, 0), (1, 1)))  # collinear triple
    with pytest.raises(InvalidArgumentError):
        Disc((0, 0), 0.0)


def test_degenerate_triangle_rejected():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(MeshError):
        Mesh.from_arrays(verts, np.array([[0, 1, 2]]), UnitSquare())


def test_mesh_arrays_read_only():
    mesh = build_square_mesh(3)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 1.0
