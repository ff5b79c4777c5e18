import numpy as np
import pytest

from indoorloc.errors import CapacityError
from indoorloc.mesh import (
    TriMesh,
    box_mesh,
    edge_lengths,
    merge_meshes,
    subdivide_mesh,
    triangle_areas,
)


def right_triangle(legs=2.0):
    verts = np.array([[0, 0, 0], [legs, 0, 0], [0, legs, 0]], dtype=float)
    cols = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    return TriMesh(verts, cols, np.array([[0, 1, 2]], dtype=np.int32))


class TestTriMesh:
    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            TriMesh(np.zeros((2, 3)), np.zeros((2, 3)), np.array([[0, 1, 2]]))

    def test_degenerate_triangle_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        with pytest.raises(ValueError):
            TriMesh(verts, np.zeros((3, 3)), np.array([[0, 1, 2]]))

    def test_box_closed_and_area(self):
        box = box_mesh([0, 0, 0], [1, 2, 3], [0.5, 0.5, 0.5])
        assert box.num_triangles == 12
        # surface area of a 1x2x3 box = 2(1*2 + 2*3 + 1*3) = 22
        assert triangle_areas(box.vertices, box.triangles).sum() == pytest.approx(22.0)

    def test_merge_offsets_indices(self):
        a = right_triangle()
        b = right_triangle()
        m = merge_meshes([a, b])
        assert m.num_vertices == 6
        assert m.triangles[1].tolist() == [3, 4, 5]


class TestSubdivide:
    def test_noop_returns_same_mesh(self):
        mesh = right_triangle(legs=0.5)
        out = subdivide_mesh(mesh, max_edge=1.0)
        assert out is mesh

    def test_right_triangle_edges_and_area(self):
        mesh = right_triangle(legs=2.0)
        out = subdivide_mesh(mesh, max_edge=1.0)
        assert edge_lengths(out.vertices, out.triangles).max() <= 1.0 + 1e-12
        got = triangle_areas(out.vertices, out.triangles).sum()
        assert got == pytest.approx(2.0, abs=1e-9)

    def test_vertices_stay_on_plane(self):
        rng = np.random.default_rng(4)
        verts = rng.normal(size=(3, 3)) * 3
        mesh = TriMesh(verts, rng.uniform(size=(3, 3)), np.array([[0, 1, 2]]))
        out = subdivide_mesh(mesh, max_edge=0.4)
        n = np.cross(verts[1] - verts[0], verts[2] - verts[0])
        n = n / np.linalg.norm(n)
        dist = (out.vertices - verts[0]) @ n
        assert np.abs(dist).max() < 1e-9

    def test_colors_barycentric(self):
        mesh = right_triangle(legs=2.0)
        # hypotenuse 2*sqrt(2) -> n=2, lattice lands on edge midpoints
        out = subdivide_mesh(mesh, max_edge=np.sqrt(2.0))
        # midpoint of edge v0-v1 gets the average color
        mid = np.array([1.0, 0.0, 0.0])
        idx = np.argmin(np.linalg.norm(out.vertices - mid, axis=1))
        np.testing.assert_allclose(out.colors[idx], [0.5, 0.5, 0.0])

    def test_area_preserved_on_box(self):
        box = box_mesh([0, 0, 0], [2, 3, 1], [0.3, 0.3, 0.3])
        out = subdivide_mesh(box, max_edge=0.5)
        want = triangle_areas(box.vertices, box.triangles).sum()
        got = triangle_areas(out.vertices, out.triangles).sum()
        assert got == pytest.approx(want, abs=1e-9)
        assert edge_lengths(out.vertices, out.triangles).max() <= 0.5 + 1e-12

    def test_capacity_error(self):
        box = box_mesh([0, 0, 0], [8, 8, 3], [0.3, 0.3, 0.3])
        with pytest.raises(CapacityError):
            subdivide_mesh(box, max_edge=1e-6)

    def test_bad_max_edge(self):
        with pytest.raises(ValueError):
            subdivide_mesh(right_triangle(), max_edge=0.0)
