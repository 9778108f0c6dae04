"""Synthetic pinhole cameras, fiducial projection, attitude compensation, and
the six-component advanced feature vector.

No pixels are rendered: corner features come straight from projecting the
known 3D corners, which keeps every camera quantity differentiable and
oracle-checkable.  Image conventions (pinned by tests): optical axis +z,
u right, v down; corners ordered counter-clockwise in image coordinates
starting at (-,-).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateProjection,
    DegenerateQuad,
    SingularInteraction,
)
from .kinematics import MountTransforms, QuadratureGrid, tip_pose, uav_pose
from .liegroup import SE3Pose, euler_zyx_rotation, exp_se3
from .rod import StrainBasis

VISIBILITY_MARGIN_PX = 2.0


@dataclass(frozen=True)
class CameraIntrinsics:
    """Square-pixel pinhole intrinsics (f_x = f_y)."""

    width: int
    height: int
    focal: float
    cx: float
    cy: float
    near: float
    far: float

    def __post_init__(self):
        if min(self.width, self.height, self.focal, self.near, self.far) <= 0:
            raise ValueError("intrinsics must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.far <= self.near:
            raise ValueError("far plane must exceed near plane")


@dataclass(frozen=True)
class FiducialTarget:
    """Square marker; corners live in the marker x-y plane."""

    pose: SE3Pose
    side: float

    def corners(self) -> np.ndarray:
        h = self.side / 2.0
        local = np.array(
            [[-h, -h, 0.0], [-h, h, 0.0], [h, h, 0.0], [h, -h, 0.0]]
        )
        return np.array([self.pose.apply(p) for p in local])

    def center(self) -> np.ndarray:
        return self.pose.translation


@dataclass(frozen=True)
class ProjectedFeature:
    normalized: np.ndarray  # (u, v, 1)
    depth: float
    pixel: np.ndarray  # (col, row)
    visible: bool


def project(
    camera_pose: SE3Pose, intrinsics: CameraIntrinsics, point: np.ndarray
) -> ProjectedFeature:
    """Pinhole projection of a world point into the given camera."""
    local = camera_pose.inverse().apply(point)
    z = float(local[2])
    if z <= intrinsics.near:
        raise BehindCamera(f"point depth {z!r} at or behind the near plane")
    normalized = np.array([local[0] / z, local[1] / z, 1.0])
    pixel = np.array(
        [
            intrinsics.focal * normalized[0] + intrinsics.cx,
            intrinsics.focal * normalized[1] + intrinsics.cy,
        ]
    )
    m = VISIBILITY_MARGIN_PX
    visible = (
        z < intrinsics.far
        and m <= pixel[0] <= intrinsics.width - m
        and m <= pixel[1] <= intrinsics.height - m
    )
    return ProjectedFeature(normalized=normalized, depth=z, pixel=pixel, visible=visible)


def camera_pose_local(
    q: np.ndarray, basis: StrainBasis, mounts: MountTransforms, grid: QuadratureGrid
) -> SE3Pose:
    """World pose of the tip camera through the full kinematic chain."""
    return tip_pose(q, basis, mounts, grid) @ mounts.local_camera


def camera_pose_global(q: np.ndarray, mounts: MountTransforms) -> SE3Pose:
    """World pose of the body-mounted camera."""
    return uav_pose(q) @ mounts.global_camera


def virtual_camera_rotation(
    q: np.ndarray, basis: StrainBasis, mounts: MountTransforms, grid: QuadratureGrid
) -> np.ndarray:
    """Rotation from the tip camera to its roll/pitch-free virtual twin.

    The virtual camera keeps the real optical center and replaces the UAV
    attitude by yaw only, so the relative transform is a pure rotation.
    """
    real = camera_pose_local(q, basis, mounts, grid)
    virtual = virtual_camera_pose(q, basis, mounts, grid)
    relative = virtual.inverse() @ real
    if np.max(np.abs(relative.translation)) > 1e-10:
        raise DegenerateProjection("virtual camera transform is not a pure rotation")
    return relative.rotation


def virtual_camera_pose(
    q: np.ndarray, basis: StrainBasis, mounts: MountTransforms, grid: QuadratureGrid
) -> SE3Pose:
    """Pose used for servo commands: yaw-only attitude, real optical center."""
    real = camera_pose_local(q, basis, mounts, grid)
    level_rotation = (
        euler_zyx_rotation(0.0, 0.0, q[2])
        @ uav_pose(q).rotation.T
        @ real.rotation
    )
    return SE3Pose(level_rotation, real.translation.copy())


def compensate(points: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Map normalized projections into the virtual camera, dropping the
    depth-ratio factor (small-rotation approximation)."""
    points = np.atleast_2d(np.asarray(points, float))
    rotated = points @ rotation.T
    out = np.empty_like(rotated)
    for i, p in enumerate(rotated):
        if p[2] < 1e-6:
            raise DegenerateProjection("compensated point lost positive depth")
        out[i] = p / p[2]
    return out


def advanced_features(points: np.ndarray) -> np.ndarray:
    """Six advanced features of four image points: three rotation-sensitive
    arctangent combinations, the centroid, and the closed-quad perimeter."""
    pts = np.asarray(points, float)
    if pts.shape[0] != 4:
        raise ValueError("advanced features need exactly four points")
    uv = pts[:, :2]
    diffs = uv[:, None, :] - uv[None, :, :]
    dists = np.linalg.norm(diffs, axis=2)
    if np.min(dists[np.triu_indices(4, k=1)]) < 1e-12:
        raise DegenerateQuad("repeated corner points")
    (u1, v1), (u2, v2), (u3, v3), (u4, v4) = uv
    with np.errstate(divide="ignore"):
        p_phi = 0.5 * (
            np.arctan((u2 - u1) / (v1 - v2)) - np.arctan((u3 - u4) / (v4 - v3))
        )
        p_theta = 0.5 * (
            np.arctan((v3 - v2) / (u3 - u2)) - np.arctan((v4 - v1) / (u4 - u1))
        )
        p_psi = 0.5 * (
            np.arctan((v1 - v4) / (u4 - u1)) + np.arctan((v2 - v3) / (u3 - u2))
        )
    perimeter = (
        np.hypot(u2 - u1, v2 - v1)
        + np.hypot(u3 - u2, v3 - v2)
        + np.hypot(u4 - u3, v4 - v3)
        + np.hypot(u4 - u1, v4 - v1)
    )
    return np.array(
        [p_phi, p_theta, p_psi, np.mean(uv[:, 0]), np.mean(uv[:, 1]), perimeter]
    )


def feature_error(features: np.ndarray, desired: np.ndarray) -> np.ndarray:
    """Componentwise error with the angle entries wrapped to (-pi, pi]."""
    err = np.asarray(features, float) - np.asarray(desired, float)
    wrapped = np.mod(err[:3] + np.pi, 2.0 * np.pi) - np.pi
    wrapped[wrapped == -np.pi] = np.pi
    return np.concatenate([wrapped, err[3:]])


def _features_at(
    camera_pose: SE3Pose, intrinsics: CameraIntrinsics, target: FiducialTarget
) -> np.ndarray:
    points = np.array(
        [project(camera_pose, intrinsics, c).normalized for c in target.corners()]
    )
    return advanced_features(points)


def interaction_matrix(
    camera_pose: SE3Pose,
    intrinsics: CameraIntrinsics,
    target: FiducialTarget,
    delta: float = 1e-5,
    condition_limit: float = 1e8,
) -> np.ndarray:
    """Feature sensitivity to camera body twists, by central differences of
    the true (synthetic-world) feature map.  Columns are ordered
    angular-first to match the twist convention."""
    columns = []
    for j in range(6):
        e = np.zeros(6)
        e[j] = 1.0
        plus = _features_at(camera_pose @ exp_se3(e, delta), intrinsics, target)
        minus = _features_at(camera_pose @ exp_se3(e, -delta), intrinsics, target)
        columns.append((plus - minus) / (2.0 * delta))
    j_img = np.column_stack(columns)
    if np.linalg.cond(j_img) > condition_limit:
        raise SingularInteraction("interaction matrix condition number above 1e8")
    return j_img


@dataclass(frozen=True)
class SyntheticWorld:
    """The analytic scene: one marker plus the two camera parameter sets."""

    target: FiducialTarget
    local_camera: CameraIntrinsics
    global_camera: CameraIntrinsics
