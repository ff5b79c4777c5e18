"""Colored triangle meshes and edge-length-bounded subdivision.

Vertices carry a position (meters) and an albedo color in [0, 1]. Faces are
flat-colored by construction: primitives duplicate corner vertices per face
so colors never bleed across creases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError

DEGENERATE_AREA = 1e-12


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh with per-vertex colors."""

    vertices: np.ndarray  # (N, 3) float64, meters
    colors: np.ndarray  # (N, 3) float64 in [0, 1]
    triangles: np.ndarray  # (M, 3) int32 vertex indices

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        c = np.ascontiguousarray(np.asarray(self.colors, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int32))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (N, 3), got {v.shape}")
        if c.shape != v.shape:
            raise ValueError(f"colors must match vertices, got {c.shape} vs {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"triangles must be (M, 3), got {t.shape}")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "colors", c)
        object.__setattr__(self, "triangles", t)
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        if len(t):
            areas = triangle_areas(v, t)
            if areas.min() <= DEGENERATE_AREA:
                raise ValueError(f"degenerate triangle with area {areas.min()}")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def tobytes(self) -> bytes:
        """Canonical byte serialization (for determinism comparisons)."""
        return (
            self.vertices.tobytes()
            + self.colors.tobytes()
            + self.triangles.tobytes()
        )


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def edge_lengths(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """(M, 3) lengths of edges (v0v1, v1v2, v2v0) per triangle."""
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return np.stack(
        [
            np.linalg.norm(b - a, axis=1),
            np.linalg.norm(c - b, axis=1),
            np.linalg.norm(a - c, axis=1),
        ],
        axis=1,
    )


def merge_meshes(meshes: list[TriMesh]) -> TriMesh:
    verts, cols, tris = [], [], []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        cols.append(m.colors)
        tris.append(m.triangles + offset)
        offset += m.num_vertices
    return TriMesh(np.vstack(verts), np.vstack(cols), np.vstack(tris))


def quad_mesh(corners: np.ndarray, color) -> TriMesh:
    """Two triangles over four coplanar corners given in winding order."""
    corners = np.asarray(corners, dtype=np.float64)
    colors = np.tile(np.asarray(color, dtype=np.float64), (4, 1))
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    return TriMesh(corners, colors, tris)


def box_mesh(min_corner, max_corner, color, inward: bool = False) -> TriMesh:
    """Axis-aligned box, 6 quads with duplicated corners (24 vertices).

    inward=True flips windings so faces point into the volume (room shells).
    """
    lo = np.asarray(min_corner, dtype=np.float64)
    hi = np.asarray(max_corner, dtype=np.float64)
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    # Outward-wound faces: -x, +x, -y, +y, -z, +z
    faces = [
        [(x0, y0, z0), (x0, y0, z1), (x0, y1, z1), (x0, y1, z0)],
        [(x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)],
        [(x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)],
        [(x0, y1, z0), (x0, y1, z1), (x1, y1, z1), (x1, y1, z0)],
        [(x0, y0, z0), (x0, y1, z0), (x1, y1, z0), (x1, y0, z0)],
        [(x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)],
    ]
    color = np.asarray(color, dtype=np.float64)
    if color.ndim == 1:
        face_colors = [color] * 6
    else:
        if color.shape != (6, 3):
            raise ValueError("box color must be one RGB or six per-face RGBs")
        face_colors = list(color)
    quads = []
    for corners, col in zip(faces, face_colors):
        corners = np.asarray(corners)
        if inward:
            corners = corners[::-1]
        quads.append(quad_mesh(corners, col))
    return merge_meshes(quads)


def _grid_divisions(longest: np.ndarray, max_edge: float) -> np.ndarray:
    n = np.ceil(longest / max_edge - 1e-12).astype(np.int64)
    return np.maximum(n, 1)


def subdivide_mesh(mesh: TriMesh, max_edge: float, vertex_cap: int = 200_000) -> TriMesh:
    """Split triangles into regular barycentric grids until every edge <= max_edge.

    Each triangle with longest edge L is divided into n^2 similar triangles,
    n = ceil(L / max_edge), so all sub-edges are original edges scaled by
    1/n. New vertices lie exactly on the original triangle plane and colors
    are barycentrically interpolated. Triangles are not welded to their
    neighbors afterwards; the surface geometry is unchanged either way.
    """
    if max_edge <= 0:
        raise ValueError("max_edge must be positive")
    longest = edge_lengths(mesh.vertices, mesh.triangles).max(axis=1)
    divs = _grid_divisions(longest, max_edge)
    if np.all(divs == 1):
        return mesh
    total_vertices = int(np.sum((divs + 1) * (divs + 2) // 2))
    if total_vertices > vertex_cap:
        raise CapacityError(
            f"subdividing to max_edge={max_edge} needs {total_vertices} vertices, "
            f"cap is {vertex_cap}"
        )
    out_verts = np.empty((total_vertices, 3), dtype=np.float64)
    out_cols = np.empty((total_vertices, 3), dtype=np.float64)
    out_tris = []
    cursor = 0
    for t, n in zip(mesh.triangles, divs.tolist()):
        v0, v1, v2 = mesh.vertices[t]
        c0, c1, c2 = mesh.colors[t]
        base = cursor
        # Row-major barycentric lattice: row i has n + 1 - i entries.
        row_start = []
        for i in range(n + 1):
            row_start.append(cursor - base)
            for j in range(n + 1 - i):
                a = i / n
                b = j / n
                w = 1.0 - a - b
                out_verts[cursor] = w * v0 + b * v1 + a * v2
                out_cols[cursor] = w * c0 + b * c1 + a * c2
                cursor += 1
        for i in range(n):
            for j in range(n - i):
                p = base + row_start[i] + j
                q = base + row_start[i + 1] + j
                out_tris.append((p, p + 1, q))
                if j < n - i - 1:
                    out_tris.append((p + 1, q + 1, q))
    return TriMesh(out_verts, out_cols, np.asarray(out_tris, dtype=np.int32))
