"""Pinhole camera math: back-projection, world directions, forward projection.

Conventions: camera frame is x-right, y-down, z-forward; the world frame is
z-up. Directions are free vectors, so camera-to-world transport applies the
pose rotation only (no translation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class OutOfBoundsError(ValueError):
    """Pixel lies outside the image."""


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def hfov(self) -> float:
        """Horizontal field of view in radians."""
        return 2.0 * math.atan(self.width / (2.0 * self.fx))

    def contains(self, u: float, v: float) -> bool:
        return 0 <= u < self.width and 0 <= v < self.height


def camera_from_hfov(width: int, height: int, hfov_rad: float) -> CameraModel:
    """Square-pixel camera with the principal point at the image center."""
    fx = width / (2.0 * math.tan(hfov_rad / 2.0))
    return CameraModel(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def _quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class Pose:
    """Position plus a camera-to-world rotation as a unit quaternion (w, x, y, z)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        q = np.asarray(self.orientation, dtype=float)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("orientation quaternion must be unit-norm within 1e-9")
        object.__setattr__(self, "orientation", q)

    @property
    def rotation_matrix(self) -> np.ndarray:
        return _quat_to_matrix(self.orientation)

    @classmethod
    def identity(cls, position=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(position=np.asarray(position, float), orientation=np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_yaw(cls, x: float, y: float, z: float, yaw: float) -> "Pose":
        """Pose rotated about the world up axis only."""
        q = np.array([math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0)])
        return cls(position=np.array([x, y, z]), orientation=q)

    @classmethod
    def level_camera(cls, x: float, y: float, height: float, yaw: float) -> "Pose":
        """Camera mounted level with the ground, optical axis along world yaw.

        Maps camera x-right / y-down / z-forward onto the z-up world so that
        the optical axis points at (cos yaw, sin yaw, 0).
        """
        a = yaw - math.pi / 2.0
        qz = np.array([math.cos(a / 2.0), 0.0, 0.0, math.sin(a / 2.0)])
        qx = np.array([math.cos(-math.pi / 4.0), math.sin(-math.pi / 4.0), 0.0, 0.0])
        q = _quat_multiply(qz, qx)
        q /= np.linalg.norm(q)
        return cls(position=np.array([x, y, height]), orientation=q)


class DirectionSource(Enum):
    LIVE = "live"
    KEYFRAME_FUSED = "keyframe_fused"


@dataclass(frozen=True)
class DirectionEstimate:
    """Unit direction toward the target in world coordinates."""

    direction: np.ndarray
    source: DirectionSource
    confidence: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("direction must be unit-norm within 1e-9")
        object.__setattr__(self, "direction", d)
        if self.confidence < 0:
            raise ValueError("confidence must be nonnegative")

    @property
    def bearing(self) -> float:
        """Horizontal heading of the direction, atan2(y, x)."""
        return math.atan2(self.direction[1], self.direction[0])


def pixel_to_ray(cam: CameraModel, pixel: tuple[float, float]) -> np.ndarray:
    """Unit camera-frame ray through a pixel."""
    u, v = pixel
    if not cam.contains(u, v):
        raise OutOfBoundsError(f"pixel {pixel} outside {cam.width}x{cam.height} image")
    ray = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
    return ray / np.linalg.norm(ray)


def ray_to_world(pose: Pose, ray_cam: np.ndarray, confidence: float = 1.0) -> DirectionEstimate:
    """Rotate a camera-frame ray into the world frame (directions carry no translation)."""
    d = pose.rotation_matrix @ np.asarray(ray_cam, dtype=float)
    d = d / np.linalg.norm(d)
    return DirectionEstimate(direction=d, source=DirectionSource.LIVE, confidence=confidence)


class ProjectionFailure(Enum):
    BEHIND = "behind"
    OUT_OF_VIEW = "out_of_view"


def camera_frame_point(pose: Pose, world_point: np.ndarray) -> np.ndarray:
    """World point expressed in the camera frame."""
    p = np.asarray(world_point, dtype=float) - pose.position
    return pose.rotation_matrix.T @ p


def project_point(
    cam: CameraModel, pose: Pose, world_point: np.ndarray
) -> tuple[float, float] | ProjectionFailure:
    """Forward pinhole projection; BEHIND for z<=0, OUT_OF_VIEW past image bounds."""
    pc = camera_frame_point(pose, world_point)
    if pc[2] <= 0.0:
        return ProjectionFailure.BEHIND
    u = cam.fx * pc[0] / pc[2] + cam.cx
    v = cam.fy * pc[1] / pc[2] + cam.cy
    if not cam.contains(u, v):
        return ProjectionFailure.OUT_OF_VIEW
    return (u, v)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi
