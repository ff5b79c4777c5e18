"""Pose and quaternion math: the balanced pose loss, normalization, metrics.

Conventions
-----------
- Quaternions are length-4 float64 arrays in (w, x, y, z) order and encode
  world-from-camera rotations.
- Positions are length-3 float64 arrays in meters, world frame: x right,
  y into the room (toward the far wall), z up.
- The camera frame follows the usual pinhole convention: x right, y down,
  z forward (viewing direction).
- The 7-value regression target is laid out [x, y, z, w, qx, qy, qz].

All functions here are pure and operate at double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateQuaternionError

QUAT_EPS = 1e-12


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"expected a length-4 quaternion, got shape {q.shape}")
    return q


def _as_vec3(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"expected a length-3 vector, got shape {p.shape}")
    return p


def quat_normalize(q) -> np.ndarray:
    """Return q scaled to unit L2 norm.

    Inputs already unit-norm within 1e-12 are returned unscaled, which makes
    normalization bitwise idempotent at double precision.
    Raises DegenerateQuaternionError when ||q|| <= 1e-12.
    """
    q = _as_quat(q)
    norm = float(np.linalg.norm(q))
    if norm <= QUAT_EPS:
        raise DegenerateQuaternionError(f"quaternion norm {norm} too small to normalize")
    if abs(norm - 1.0) <= 1e-12:
        return q.copy()
    return q / norm


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a * b in (w, x, y, z) order."""
    aw, ax, ay, az = _as_quat(a)
    bw, bx, by, bz = _as_quat(b)
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by + ay * bw + az * bx - ax * bz,
            aw * bz + az * bw + ax * by - ay * bx,
        ]
    )


def axis_angle_quat(axis, angle: float) -> np.ndarray:
    """Unit quaternion rotating by `angle` radians about `axis`."""
    axis = _as_vec3(axis)
    norm = float(np.linalg.norm(axis))
    if norm <= QUAT_EPS:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * angle
    s = np.sin(half) / norm
    return np.array([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    q = _as_quat(q)
    v = _as_vec3(v)
    u = q[1:]
    w = q[0]
    return 2.0 * np.dot(u, v) * u + (w * w - np.dot(u, u)) * v + 2.0 * w * np.cross(u, v)


def quat_error(a, b) -> float:
    """Double-cover-aware distance between two rotations.

    Both inputs are normalized first; the result is
    min(||a - b||, ||a + b||), which is symmetric, invariant to flipping
    the sign of either argument, and lies in [0, sqrt(2)] (the value
    sqrt(2) is reached exactly for perpendicular unit quaternions).
    """
    an = quat_normalize(a)
    bn = quat_normalize(b)
    return float(min(np.linalg.norm(an - bn), np.linalg.norm(an + bn)))


# Base orientation: camera at yaw 0 looks along world +y with +z up, which
# puts camera x along world +x and camera y (image down) along world -z.
_BASE_QUAT = np.array([np.sqrt(0.5), -np.sqrt(0.5), 0.0, 0.0])


def yaw_pitch_quat(yaw: float, pitch: float) -> np.ndarray:
    """Camera orientation from a world-frame yaw and a camera-frame pitch.

    yaw rotates about world z (0 faces +y, positive turns toward -x);
    pitch rotates about the camera's own x axis (positive looks up).
    Roll is always zero.
    """
    qz = axis_angle_quat([0.0, 0.0, 1.0], yaw)
    qx = axis_angle_quat([1.0, 0.0, 0.0], pitch)
    return quat_normalize(quat_multiply(quat_multiply(qz, _BASE_QUAT), qx))


def look_at_quat(eye, target) -> np.ndarray:
    """Zero-roll camera orientation at `eye` looking toward `target`."""
    eye = _as_vec3(eye)
    target = _as_vec3(target)
    f = target - eye
    norm = float(np.linalg.norm(f))
    if norm <= QUAT_EPS:
        raise ValueError("eye and target coincide; viewing direction undefined")
    f = f / norm
    pitch = np.arcsin(np.clip(f[2], -1.0, 1.0))
    yaw = np.arctan2(-f[0], f[1])
    return yaw_pitch_quat(float(yaw), float(pitch))


def _rotation_matrix(q) -> np.ndarray:
    """World-from-camera rotation matrix for a unit quaternion (internal)."""
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class Pose:
    """Camera pose: world position in meters + world-from-camera quaternion.

    The orientation is normalized on construction; degenerate quaternions
    are rejected.
    """

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position).copy())
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))

    def forward(self) -> np.ndarray:
        """Viewing direction (camera +z) in world coordinates."""
        return quat_rotate(self.orientation, np.array([0.0, 0.0, 1.0]))

    def as_vector(self) -> np.ndarray:
        """The 7-value layout [x, y, z, w, qx, qy, qz]."""
        return np.concatenate([self.position, self.orientation])


@dataclass(frozen=True)
class SceneBounds:
    """Axis-aligned box holding a scene; stores normalization constants."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", _as_vec3(self.min_corner).copy())
        object.__setattr__(self, "max_corner", _as_vec3(self.max_corner).copy())
        if not np.all(self.max_corner > self.min_corner):
            raise ValueError("max_corner must exceed min_corner on every axis")

    @property
    def extent(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = _as_vec3(p)
        return bool(
            np.all(p >= self.min_corner - tol) and np.all(p <= self.max_corner + tol)
        )

    def to_unit(self, p) -> np.ndarray:
        """Affine map of a world point into [-1, 1]^3 (no range check)."""
        p = _as_vec3(p)
        return 2.0 * (p - self.min_corner) / self.extent - 1.0

    def from_unit(self, u) -> np.ndarray:
        """Inverse of to_unit (no range check)."""
        u = _as_vec3(u)
        return self.min_corner + (u + 1.0) * 0.5 * self.extent


def normalize_position(p, bounds: SceneBounds) -> np.ndarray:
    """Map an in-bounds world position to [-1, 1]^3."""
    p = _as_vec3(p)
    if not bounds.contains(p):
        raise ValueError(f"position {p} outside bounds [{bounds.min_corner}, {bounds.max_corner}]")
    return bounds.to_unit(p)


def denormalize_position(u, bounds: SceneBounds) -> np.ndarray:
    """Map a normalized position in [-1, 1]^3 back to world meters."""
    u = _as_vec3(u)
    if np.any(u < -1.0 - 1e-9) or np.any(u > 1.0 + 1e-9):
        raise ValueError(f"normalized position {u} outside [-1, 1]^3")
    return bounds.from_unit(u)


@dataclass(frozen=True)
class PoseLossSpec:
    """Balance factor for the combined position/orientation loss."""

    beta: float = field(default=250.0)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")


def pose_loss_raw(pred, target_position, target_quat, beta: float) -> float:
    """Balanced pose loss on a raw 7-value prediction.

    loss = ||P - Phat||_2 + (1/beta) * ||Qhat - Q/||Q||||_2

    Only the target quaternion is normalized; the predicted quaternion
    enters as-is, so the loss is well-defined (and differentiable) for
    arbitrary raw regressor outputs.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != (7,):
        raise ValueError(f"expected a 7-value prediction, got shape {pred.shape}")
    p = _as_vec3(target_position)
    qn = quat_normalize(target_quat)
    pos_term = float(np.linalg.norm(p - pred[:3]))
    quat_term = float(np.linalg.norm(pred[3:] - qn))
    return pos_term + quat_term / beta


def pose_loss(pred, target: Pose, spec: PoseLossSpec) -> float:
    """Balanced pose loss against a Pose target."""
    return pose_loss_raw(pred, target.position, target.orientation, spec.beta)


def pose_loss_grad(pred, target_position, target_quat, beta: float) -> np.ndarray:
    """Analytic gradient of pose_loss_raw with respect to the 7 predictions.

    Undefined (raises) exactly where the loss is not differentiable:
    when either norm term vanishes.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != (7,):
        raise ValueError(f"expected a 7-value prediction, got shape {pred.shape}")
    p = _as_vec3(target_position)
    qn = quat_normalize(target_quat)
    dpos = pred[:3] - p
    dquat = pred[3:] - qn
    pos_norm = float(np.linalg.norm(dpos))
    quat_norm = float(np.linalg.norm(dquat))
    if pos_norm <= QUAT_EPS or quat_norm <= QUAT_EPS:
        raise ValueError("gradient undefined where a loss term vanishes")
    return np.concatenate([dpos / pos_norm, dquat / (beta * quat_norm)])
