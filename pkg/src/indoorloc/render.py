"""Deterministic software renderer: z-buffered triangles and point splats.

Two render modes share one pinhole camera model:

- surface mode rasterizes triangles with flat Lambertian shading (one fixed
  directional light + 0.3 ambient) into an RGB image and a depth map;
- point mode subdivides the mesh, projects every vertex, and draws 1-pixel
  splats of raw vertex albedo, hidden-surface-tested against the surface
  depth map. This mimics rendering the mesh as its vertex point cloud.

Determinism rules: triangles and vertices are processed in index order and
depth tests are strict, so z ties resolve toward the lower index. All math
is float64 and sequential; identical inputs yield byte-identical images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import Pose, _rotation_matrix
from .mesh import TriMesh, subdivide_mesh

AMBIENT = 0.3
# unit vector toward the light; componentwise distinct so each wall
# orientation shades differently
LIGHT_DIR = np.array([0.32, 0.44, 0.84])
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)

DEPTH_BIAS_SCALE = 1e-4


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: square pixels, principal point at the image center."""

    width: int = 64
    height: int = 64
    fov: float = math.radians(60.0)  # vertical field of view, radians
    near: float = 0.05
    far: float = 50.0

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError("image must be at least 16x16")
        if not 0.0 < self.fov < math.pi:
            raise ValueError(f"fov must be in (0, pi), got {self.fov}")
        if not 0.0 < self.near < self.far:
            raise ValueError("need 0 < near < far")

    @property
    def focal(self) -> float:
        return (self.height / 2.0) / math.tan(self.fov / 2.0)

    @property
    def depth_bias(self) -> float:
        return DEPTH_BIAS_SCALE * (self.far - self.near)


def world_to_camera(points: np.ndarray, pose: Pose) -> np.ndarray:
    """Transform world points into the camera frame (x right, y down, z fwd)."""
    rot = _rotation_matrix(pose.orientation)
    return np.ascontiguousarray((np.asarray(points, dtype=np.float64) - pose.position) @ rot)


def shade_faces(mesh: TriMesh) -> np.ndarray:
    """Flat per-face colors: mean vertex albedo under ambient + one light."""
    v = mesh.vertices
    t = mesh.triangles
    normals = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    intensity = AMBIENT + (1.0 - AMBIENT) * np.abs(normals @ LIGHT_DIR)
    albedo = mesh.colors[t].mean(axis=1)
    return np.ascontiguousarray(albedo * intensity[:, None])


@njit(cache=True)
def _raster_surface(cam_verts, tris, face_colors, width, height, focal, near, far):
    cx = width / 2.0
    cy = height / 2.0
    img = np.zeros((height, width, 3), dtype=np.float64)
    depth = np.full((height, width), np.inf, dtype=np.float64)
    poly = np.empty((4, 3), dtype=np.float64)
    fan = np.empty((3, 3), dtype=np.float64)
    for t in range(tris.shape[0]):
        # clip the triangle against the z = near plane (Sutherland-Hodgman)
        count = 0
        for e in range(3):
            ia = tris[t, e]
            ib = tris[t, (e + 1) % 3]
            za = cam_verts[ia, 2]
            zb = cam_verts[ib, 2]
            ina = za >= near
            inb = zb >= near
            if ina:
                poly[count, 0] = cam_verts[ia, 0]
                poly[count, 1] = cam_verts[ia, 1]
                poly[count, 2] = za
                count += 1
            if ina != inb:
                s = (near - za) / (zb - za)
                poly[count, 0] = cam_verts[ia, 0] + s * (cam_verts[ib, 0] - cam_verts[ia, 0])
                poly[count, 1] = cam_verts[ia, 1] + s * (cam_verts[ib, 1] - cam_verts[ia, 1])
                poly[count, 2] = near
                count += 1
        if count < 3:
            continue
        for sub in range(count - 2):
            fan[0] = poly[0]
            fan[1] = poly[sub + 1]
            fan[2] = poly[sub + 2]
            # project to continuous pixel coordinates
            x0 = cx + focal * fan[0, 0] / fan[0, 2]
            y0 = cy + focal * fan[0, 1] / fan[0, 2]
            x1 = cx + focal * fan[1, 0] / fan[1, 2]
            y1 = cy + focal * fan[1, 1] / fan[1, 2]
            x2 = cx + focal * fan[2, 0] / fan[2, 2]
            y2 = cy + focal * fan[2, 1] / fan[2, 2]
            area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if area2 == 0.0:
                continue
            min_x = min(x0, min(x1, x2))
            max_x = max(x0, max(x1, x2))
            min_y = min(y0, min(y1, y2))
            max_y = max(y0, max(y1, y2))
            ix0 = max(0, int(math.floor(min_x - 0.5)))
            ix1 = min(width - 1, int(math.ceil(max_x)))
            iy0 = max(0, int(math.floor(min_y - 0.5)))
            iy1 = min(height - 1, int(math.ceil(max_y)))
            inv_z0 = 1.0 / fan[0, 2]
            inv_z1 = 1.0 / fan[1, 2]
            inv_z2 = 1.0 / fan[2, 2]
            for iy in range(iy0, iy1 + 1):
                sy = iy + 0.5
                for ix in range(ix0, ix1 + 1):
                    sx = ix + 0.5
                    e0 = (x1 - x0) * (sy - y0) - (y1 - y0) * (sx - x0)
                    e1 = (x2 - x1) * (sy - y1) - (y2 - y1) * (sx - x1)
                    e2 = (x0 - x2) * (sy - y2) - (y0 - y2) * (sx - x2)
                    if area2 > 0.0:
                        if e0 < 0.0 or e1 < 0.0 or e2 < 0.0:
                            continue
                    else:
                        if e0 > 0.0 or e1 > 0.0 or e2 > 0.0:
                            continue
                    l0 = e1 / area2
                    l1 = e2 / area2
                    l2 = e0 / area2
                    inv_z = l0 * inv_z0 + l1 * inv_z1 + l2 * inv_z2
                    if inv_z <= 0.0:
                        continue
                    z = 1.0 / inv_z
                    if z > far:
                        continue
                    if z < depth[iy, ix]:
                        depth[iy, ix] = z
                        img[iy, ix, 0] = face_colors[t, 0]
                        img[iy, ix, 1] = face_colors[t, 1]
                        img[iy, ix, 2] = face_colors[t, 2]
    return img, depth


@njit(cache=True)
def _splat_points(cam_verts, colors, depth, width, height, focal, near, far, bias):
    cx = width / 2.0
    cy = height / 2.0
    img = np.zeros((height, width, 3), dtype=np.float64)
    point_depth = np.full((height, width), np.inf, dtype=np.float64)
    for i in range(cam_verts.shape[0]):
        z = cam_verts[i, 2]
        if z < near or z > far:
            continue
        px = cx + focal * cam_verts[i, 0] / z
        py = cy + focal * cam_verts[i, 1] / z
        ix = int(math.floor(px))
        iy = int(math.floor(py))
        if ix < 0 or ix >= width or iy < 0 or iy >= height:
            continue
        if z <= depth[iy, ix] + bias and z < point_depth[iy, ix]:
            point_depth[iy, ix] = z
            img[iy, ix, 0] = colors[i, 0]
            img[iy, ix, 1] = colors[i, 1]
            img[iy, ix, 2] = colors[i, 2]
    return img


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] float colors to 8-bit with round-half-up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _surface_pass(mesh: TriMesh, pose: Pose, intr: CameraIntrinsics):
    cam = world_to_camera(mesh.vertices, pose)
    shaded = shade_faces(mesh)
    img, depth = _raster_surface(
        cam, mesh.triangles, shaded, intr.width, intr.height, intr.focal, intr.near, intr.far
    )
    return img, depth


def render_rgb(mesh: TriMesh, pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Shaded surface rendering as an 8-bit RGB image (black background)."""
    img, _ = _surface_pass(mesh, pose, intr)
    return to_uint8(img)


def splat_vertices(
    submesh: TriMesh, depth: np.ndarray, pose: Pose, intr: CameraIntrinsics
) -> np.ndarray:
    """Project submesh vertices and splat unlit albedo where visible."""
    cam = world_to_camera(submesh.vertices, pose)
    img = _splat_points(
        cam,
        np.ascontiguousarray(submesh.colors),
        depth,
        intr.width,
        intr.height,
        intr.focal,
        intr.near,
        intr.far,
        intr.depth_bias,
    )
    return to_uint8(img)


def render_pointcloud(
    mesh: TriMesh,
    pose: Pose,
    intr: CameraIntrinsics,
    max_edge: float,
    vertex_cap: int = 200_000,
) -> np.ndarray:
    """Point-cloud rendering: subdivided vertices splatted over the surface depth."""
    submesh = subdivide_mesh(mesh, max_edge, vertex_cap)
    _, depth = _surface_pass(mesh, pose, intr)
    return splat_vertices(submesh, depth, pose, intr)


def render_pair(
    mesh: TriMesh, submesh: TriMesh, pose: Pose, intr: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """RGB and point-cloud images from one shared surface pass.

    `submesh` must be a subdivision of `mesh`; passing it in lets callers
    subdivide once per scene instead of once per frame.
    """
    img, depth = _surface_pass(mesh, pose, intr)
    return to_uint8(img), splat_vertices(submesh, depth, pose, intr)
