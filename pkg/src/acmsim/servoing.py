"""High-level visual loop: IBVS twist generation, joint-rate resolution,
field-of-view recovery planning, and the mode supervisor."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegenerateWindow,
    NoFeasibleConfig,
    SingularInteraction,
    TargetLost,
)
from .kinematics import MountTransforms, QuadratureGrid, rod_fk
from .liegroup import adjoint_rep
from .rod import StrainBasis
from .vision import ProjectedFeature

_RECOVERY_GRID_POINTS = 41
_RECOVERY_RANGE = 2.0
_RECOVERY_REFINE_STEPS = 20
_INFEASIBLE_PENALTY = 1e6


class ServoMode(Enum):
    IBVS = "ibvs"
    RECOVERY = "recovery"
    DONE = "done"


@dataclass(frozen=True)
class CubicTrajectory:
    """Per-coordinate cubic with zero boundary velocities, in shifted time."""

    coefficients: np.ndarray  # (coords, 4): a0 + a1 t + a2 t^2 + a3 t^3
    start_time: float
    end_time: float


@dataclass(frozen=True)
class ServoCommand:
    qdot_desired: np.ndarray
    mode: ServoMode


def plan_cubic(
    q_start: np.ndarray, q_final: np.ndarray, t0: float, tf: float
) -> CubicTrajectory:
    """Rest-to-rest cubic between the two configurations."""
    if tf <= t0:
        raise DegenerateWindow(f"window [{t0}, {tf}] is empty")
    q_start = np.atleast_1d(np.asarray(q_start, float))
    q_final = np.atleast_1d(np.asarray(q_final, float))
    span = tf - t0
    delta = q_final - q_start
    coeffs = np.zeros((q_start.size, 4))
    coeffs[:, 0] = q_start
    coeffs[:, 2] = 3.0 * delta / span**2
    coeffs[:, 3] = -2.0 * delta / span**3
    return CubicTrajectory(coefficients=coeffs, start_time=t0, end_time=tf)


def sample(traj: CubicTrajectory, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and velocity at time t, clamped to the window ends."""
    tau = np.clip(t, traj.start_time, traj.end_time) - traj.start_time
    a = traj.coefficients
    pos = a[:, 0] + a[:, 1] * tau + a[:, 2] * tau**2 + a[:, 3] * tau**3
    vel = a[:, 1] + 2.0 * a[:, 2] * tau + 3.0 * a[:, 3] * tau**2
    if t < traj.start_time or t > traj.end_time:
        vel = np.zeros_like(vel)
    return pos, vel


def ibvs_twist(error: np.ndarray, j_img: np.ndarray, gain: float) -> np.ndarray:
    """Camera twist -gain * J^-1 e, with a damped inverse fallback."""
    if np.linalg.cond(j_img) <= 1e8:
        return -gain * np.linalg.solve(j_img, error)
    damped = j_img.T @ np.linalg.inv(j_img @ j_img.T + 1e-6 * np.eye(6))
    out = -gain * damped @ error
    if not np.all(np.isfinite(out)):
        raise SingularInteraction("damped interaction inverse failed")
    return out


def camera_twist_to_qdot(
    v_camera: np.ndarray,
    tip_jacobian: np.ndarray,
    camera_mount,
) -> np.ndarray:
    """Least-squares joint rates realizing the commanded camera twist.

    The camera twist is transported to the tip frame through the fixed mount,
    then resolved with the Moore-Penrose pseudoinverse (minimum-norm over the
    redundant coordinates)."""
    v_tip = adjoint_rep(camera_mount) @ np.asarray(v_camera, float)
    return np.linalg.pinv(tip_jacobian, rcond=1e-8) @ v_tip


def target_in_body_frame(
    mounts: MountTransforms, detection: ProjectedFeature
) -> np.ndarray:
    """Back-project a global-camera detection into the UAV body frame."""
    return mounts.global_camera.apply(detection.depth * detection.normalized)


def estimate_target_in_local(
    q: np.ndarray,
    basis: StrainBasis,
    mounts: MountTransforms,
    grid: QuadratureGrid,
    detection: ProjectedFeature,
) -> np.ndarray:
    """Target point in the tip-camera frame, chained from the global camera."""
    point_body = target_in_body_frame(mounts, detection)
    camera_in_body = mounts.attach @ rod_fk(basis, q[6:], grid.length, grid) @ mounts.local_camera
    return camera_in_body.inverse().apply(point_body)


def _lateral_error(
    q_s: np.ndarray,
    point_body: np.ndarray,
    basis: StrainBasis,
    mounts: MountTransforms,
    grid: QuadratureGrid,
) -> float | None:
    """Lateral offset of the target in the tip camera for a candidate shape;
    None when the target is not in front of the camera."""
    camera_in_body = mounts.attach @ rod_fk(basis, q_s, grid.length, grid) @ mounts.local_camera
    local = camera_in_body.inverse().apply(point_body)
    if local[2] <= 0.0:
        return None
    return float(np.hypot(local[0], local[1]))


def recovery_target(
    q: np.ndarray,
    basis: StrainBasis,
    mounts: MountTransforms,
    grid: QuadratureGrid,
    detection: ProjectedFeature,
) -> np.ndarray:
    """Rod configuration that recenters the target in the tip camera.

    Uniform grid search over the rod coordinates followed by a short
    Nelder-Mead refinement; deterministic tie-breaking by objective, then
    coordinate norm, then lexicographic order."""
    point_body = target_in_body_frame(mounts, detection)

    def objective(q_s):
        err = _lateral_error(q_s, point_body, basis, mounts, grid)
        return _INFEASIBLE_PENALTY + float(np.linalg.norm(q_s)) if err is None else err

    axis = np.linspace(-_RECOVERY_RANGE, _RECOVERY_RANGE, _RECOVERY_GRID_POINTS)
    candidates = [np.array([a, b]) for a in axis for b in axis]
    grid_feasible = any(
        _lateral_error(c, point_body, basis, mounts, grid) is not None
        for c in candidates
    )
    if not grid_feasible:
        raise NoFeasibleConfig("target behind the tip camera over the whole grid")
    candidates.append(np.array(q[6:8], dtype=float))  # incumbent shape

    def rank(q_s):
        return (objective(q_s), float(np.linalg.norm(q_s)), tuple(q_s))

    best = min(candidates, key=rank)
    result = minimize(
        objective,
        best,
        method="Nelder-Mead",
        options={
            "maxiter": _RECOVERY_REFINE_STEPS,
            "xatol": 1e-10,
            "fatol": 1e-12,
            "initial_simplex": np.array(
                [best, best + [0.05, 0.0], best + [0.0, 0.05]]
            ),
        },
    )
    refined = np.asarray(result.x, float)
    return refined if rank(refined) <= rank(best) else best


class Supervisor:
    """Switches between IBVS and recovery with hysteresis, and declares
    completion after a sustained small feature error."""

    def __init__(
        self,
        entry_frames: int = 3,
        done_threshold: float = 0.01,
        done_frames: int = 25,
    ):
        self.entry_frames = entry_frames
        self.done_threshold = done_threshold
        self.done_frames = done_frames
        self.mode: ServoMode | None = None
        self._visible_streak = 0
        self._done_streak = 0

    def update(
        self, local_visible: bool, global_visible: bool, rmse: float
    ) -> ServoMode:
        if not local_visible and not global_visible:
            raise TargetLost("target invisible to both cameras")
        if self.mode is ServoMode.DONE:
            return self.mode

        self._visible_streak = self._visible_streak + 1 if local_visible else 0

        if self.mode is None:
            self.mode = ServoMode.IBVS if local_visible else ServoMode.RECOVERY
        elif self.mode is ServoMode.IBVS and not local_visible:
            self.mode = ServoMode.RECOVERY
        elif self.mode is ServoMode.RECOVERY and self._visible_streak >= self.entry_frames:
            self.mode = ServoMode.IBVS

        if self.mode is ServoMode.IBVS and np.isfinite(rmse) and rmse < self.done_threshold:
            self._done_streak += 1
            if self._done_streak >= self.done_frames:
                self.mode = ServoMode.DONE
        else:
            self._done_streak = 0
        return self.mode
