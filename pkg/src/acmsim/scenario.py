"""Configuration, world construction, the closed-loop simulation, metrics,
and CSV logging.

The loop runs everything at one rate: synthesize camera views, compensate
attitude, pick the servo mode, form joint-rate references, apply the adaptive
control law, allocate actuators, and advance the plant one RK4 step.  Runs
are deterministic given the config and seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import control as ctl
from . import dynamics as dyn
from . import kinematics as kin
from . import servoing as sv
from . import vision as vis
from .errors import (
    AcmsimError,
    BehindCamera,
    DegenerateProjection,
    DegenerateThrust,
    ParseError,
    ReferenceNotVisible,
    TargetLost,
    ValidationError,
)
from .liegroup import SE3Pose, euler_zyx_rotation
from .rod import RodProperties, constant_bending_basis

LOG_SCHEMA = "acmsim-log v1"

#: column names with unit suffixes; order is fixed and versioned by LOG_SCHEMA
_COORDS = ("phi_rad", "theta_rad", "psi_rad", "x_m", "y_m", "z_m", "s1_radpm", "s2_radpm")
_FEATURES = ("phi_rad", "theta_rad", "psi_rad", "x", "y", "z")
CSV_COLUMNS = (
    ["t_s"]
    + [f"q_{c}" for c in _COORDS]
    + [f"qd_{c}_per_s" for c in _COORDS]
    + [f"e_{c}" for c in _COORDS]
    + [f"pstar_{c}" for c in _FEATURES]
    + [f"efeat_{c}" for c in _FEATURES]
    + ["mode"]
    + [f"tau_m{i}_n" for i in range(1, 5)]
    + [f"tau_s{i}_n" for i in range(1, 5)]
    + [f"delta_hat_{c}" for c in _COORDS]
    + ["lyapunov", "rmse"]
    + [f"corner{i}_{a}_px" for i in range(1, 5) for a in ("u", "v")]
)


@dataclass
class ScenarioConfig:
    """Validated run description; see the bundled config files for the
    key-value surface."""

    rod: RodProperties
    uav: dyn.UavInertia
    mixer: dyn.MixerParams
    mounts: kin.MountTransforms
    local_camera: vis.CameraIntrinsics
    global_camera: vis.CameraIntrinsics
    target: vis.FiducialTarget
    initial_q: np.ndarray
    reference_q: np.ndarray | None
    desired_features: np.ndarray | None
    gains: ctl.ControllerGains
    perturbation_factor: float
    perturbation_seed: int
    dt: float
    horizon: float
    quadrature_segments: int
    growth_factor: float
    growth_level: float
    done_rmse: float
    done_steps: int
    entry_frames: int
    recovery_min_duration: float
    recovery_rate_scale: float
    rate_limit: float
    tilt_limit: float
    tilt_rate_limit: float
    tilt_chase: float
    command_filter: float
    error_limit: float
    direct_generalized_input: bool
    adaptation_clamp: bool
    notices: list = field(default_factory=list)


@dataclass
class StepRecord:
    time: float
    q: np.ndarray
    qdot: np.ndarray
    error: np.ndarray
    features: np.ndarray
    feature_error: np.ndarray
    mode: str
    rotor_thrusts: np.ndarray
    tendon_tensions: np.ndarray
    delta_hat: np.ndarray
    lyapunov: float
    rmse: float
    corner_pixels: np.ndarray  # (4, 2)


@dataclass
class RunLog:
    records: list
    schema: str = LOG_SCHEMA

    def write_csv(self, path) -> None:
        lines = [f"# {self.schema}", ",".join(CSV_COLUMNS)]
        for r in self.records:
            cells = (
                [repr(r.time)]
                + [repr(v) for v in r.q]
                + [repr(v) for v in r.qdot]
                + [repr(v) for v in r.error]
                + [repr(v) for v in r.features]
                + [repr(v) for v in r.feature_error]
                + [r.mode]
                + [repr(v) for v in r.rotor_thrusts]
                + [repr(v) for v in r.tendon_tensions]
                + [repr(v) for v in r.delta_hat]
                + [repr(r.lyapunov), repr(r.rmse)]
                + [repr(v) for v in r.corner_pixels.ravel()]
            )
            lines.append(",".join(cells))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class RunSummary:
    initial_rmse: float
    final_rmse: float
    steps: int
    termination: str

    def write_json(self, path) -> None:
        record = {
            "initial_rmse": self.initial_rmse,
            "final_rmse": self.final_rmse,
            "steps": self.steps,
            "termination": self.termination,
        }
        with open(path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def normalized_rmse(feature_error: np.ndarray) -> float:
    """Root mean square of the six feature-error components (normalized
    image units and radians)."""
    e = np.asarray(feature_error, float)
    return float(np.sqrt(np.mean(np.square(e))))


# --------------------------------------------------------------------------
# config parsing

_REQUIRED = [
    "rod.length", "rod.diameter", "rod.density", "rod.young_modulus",
    "rod.poisson", "rod.damping",
    "uav.mass", "uav.inertia",
    "camera_local.width", "camera_local.height", "camera_local.focal",
    "camera_local.center", "camera_local.near", "camera_local.far",
    "camera_global.width", "camera_global.height", "camera_global.focal",
    "camera_global.center", "camera_global.near", "camera_global.far",
    "target.side",
    "initial.position", "initial.orientation", "initial.rod",
]

_OPTIONAL_DEFAULTS = {
    "rod.tendon_offset_radius": 0.02,
    "rod.tendon_count": 4,
    "mixer.arm_length": 0.23,
    "mixer.drag_factor": 0.016,
    "world.gravity": 9.81,
    "mounts.attach.rpy": [np.pi, 0.0, -np.pi / 2],
    "mounts.attach.xyz": [0.0, 0.0, -0.05],
    "mounts.local_camera.rpy": [0.0, 0.0, 0.0],
    "mounts.local_camera.xyz": [0.0, 0.0, 0.0],
    "mounts.global_camera.rpy": [np.pi, 0.0, 0.0],
    "mounts.global_camera.xyz": [0.0, 0.0, -0.03],
    "target.position": [0.0, 0.0, 0.0],
    "target.rpy": [np.pi, 0.0, -np.pi / 2],
    "gains.beta": 2.0,
    "gains.a_d": 4.0,
    "gains.a_p": 20.0,
    "gains.a_a": 10.0,
    "gains.lambda": 0.8,
    "gains.epsilon": 0.5,
    "gains.delta_limit": 50.0,
    "perturbation.factor": 0.0,
    "perturbation.seed": 0,
    "sim.horizon": 5.0,
    "sim.quadrature_segments": 20,
    "sim.direct_generalized_input": False,
    "sim.adaptation_clamp": True,
    "termination.growth_factor": 1.05,
    "termination.growth_level": 0.05,
    "termination.done_rmse": 0.01,
    "termination.done_steps": 25,
    "servo.entry_frames": 3,
    "servo.recovery_min_duration": 2.0,
    "servo.recovery_rate_scale": 4.0,
    # clamp on the commanded joint rates (uniform scaling); keeps the
    # velocity reference realizable so the attitude references stay near hover
    "servo.rate_limit": 1.0,
    # attitude-reference conditioning: magnitude cap, first-order chase, and
    # slew cap sized to the rotors' differential-thrust authority
    "servo.tilt_limit": 0.3,
    "servo.tilt_rate_limit": 2.0,
    "servo.tilt_chase": 0.15,
    # one-pole filter on the commanded rates; keeps the reference C^1 so the
    # differenced reference acceleration stays within actuator authority
    "servo.command_filter": 0.12,
    # reference governor: the integrated reference may not lead the plant by
    # more than this bound (prevents windup against the underactuated base)
    "servo.error_limit": 0.3,
}

_KNOWN_OPTIONAL = set(_OPTIONAL_DEFAULTS) | {
    "sim.dt",
    "reference.position",
    "reference.orientation",
    "reference.rod",
    "features.desired",
}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    parts = [p.strip() for p in raw.split(",")]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(f"cannot parse value {raw!r}") from exc
    return values if len(values) > 1 else values[0]


def _read_pairs(path) -> dict:
    pairs = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"{path}:{line_no}: expected 'key = value'")
        key, raw = body.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError(f"{path}:{line_no}: empty key")
        if key in pairs:
            raise ValidationError(f"duplicate key '{key}'")
        pairs[key] = _parse_value(raw)
    return pairs


def _vector(pairs, key, size) -> np.ndarray:
    value = np.atleast_1d(np.asarray(pairs[key], float))
    if value.size != size:
        raise ValidationError(f"'{key}' must have {size} components")
    return value


def _positive(pairs, key) -> float:
    value = pairs[key]
    if not isinstance(value, (int, float)) or value <= 0:
        raise ValidationError(f"'{key}' must be a positive number")
    return float(value)


def _pose_from(pairs, prefix) -> SE3Pose:
    rpy = _vector(pairs, prefix + ".rpy", 3)
    xyz = _vector(pairs, prefix + ".xyz", 3)
    return SE3Pose(euler_zyx_rotation(*rpy), xyz)


def _camera_from(pairs, prefix) -> vis.CameraIntrinsics:
    center = _vector(pairs, prefix + ".center", 2)
    try:
        return vis.CameraIntrinsics(
            width=int(pairs[prefix + ".width"]),
            height=int(pairs[prefix + ".height"]),
            focal=float(pairs[prefix + ".focal"]),
            cx=float(center[0]),
            cy=float(center[1]),
            near=float(pairs[prefix + ".near"]),
            far=float(pairs[prefix + ".far"]),
        )
    except ValueError as exc:
        raise ValidationError(f"{prefix}: {exc}") from exc


def _gain_vector(pairs, key, n) -> np.ndarray:
    value = np.atleast_1d(np.asarray(pairs[key], float))
    if value.size == 1:
        return np.full(n, value[0])
    if value.size != n:
        raise ValidationError(f"'{key}' must be a scalar or {n} values")
    return value


def load_config(path) -> ScenarioConfig:
    """Parse and validate a flat key-value config file."""
    pairs = _read_pairs(path)
    notices = []

    unknown = set(pairs) - set(_REQUIRED) - _KNOWN_OPTIONAL
    if unknown:
        raise ValidationError(f"unknown key '{sorted(unknown)[0]}'")
    missing = [k for k in _REQUIRED if k not in pairs]
    if missing:
        raise ValidationError(f"missing required key '{missing[0]}'")
    for key, default in _OPTIONAL_DEFAULTS.items():
        pairs.setdefault(key, default)
    if "sim.dt" not in pairs:
        pairs["sim.dt"] = 0.02
        notices.append("sim.dt not set; defaulting to 0.02 s")

    try:
        rod_props = RodProperties(
            length=_positive(pairs, "rod.length"),
            diameter=_positive(pairs, "rod.diameter"),
            density=_positive(pairs, "rod.density"),
            young_modulus=_positive(pairs, "rod.young_modulus"),
            poisson=float(pairs["rod.poisson"]),
            damping_coeff=_positive(pairs, "rod.damping"),
            tendon_offset_radius=_positive(pairs, "rod.tendon_offset_radius"),
            tendon_count=int(pairs["rod.tendon_count"]),
        )
    except ValueError as exc:
        raise ValidationError(f"rod: {exc}") from exc

    try:
        uav = dyn.UavInertia(
            mass=_positive(pairs, "uav.mass"),
            moments=_vector(pairs, "uav.inertia", 3),
        )
        mixer = dyn.MixerParams(
            arm_length=_positive(pairs, "mixer.arm_length"),
            drag_factor=_positive(pairs, "mixer.drag_factor"),
            gravity=float(pairs["world.gravity"]),
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    mounts = kin.MountTransforms(
        attach=_pose_from(pairs, "mounts.attach"),
        local_camera=_pose_from(pairs, "mounts.local_camera"),
        global_camera=_pose_from(pairs, "mounts.global_camera"),
    )
    target = vis.FiducialTarget(
        pose=SE3Pose(
            euler_zyx_rotation(*_vector(pairs, "target.rpy", 3)),
            _vector(pairs, "target.position", 3),
        ),
        side=_positive(pairs, "target.side"),
    )

    initial_q = np.concatenate(
        [
            _vector(pairs, "initial.orientation", 3),
            _vector(pairs, "initial.position", 3),
            _vector(pairs, "initial.rod", 2),
        ]
    )

    reference_q = None
    desired = None
    has_reference = "reference.position" in pairs
    if has_reference:
        for key in ("reference.orientation", "reference.rod"):
            if key not in pairs:
                raise ValidationError(f"missing '{key}' for the reference snapshot")
        reference_q = np.concatenate(
            [
                _vector(pairs, "reference.orientation", 3),
                _vector(pairs, "reference.position", 3),
                _vector(pairs, "reference.rod", 2),
            ]
        )
    if "features.desired" in pairs:
        if has_reference:
            raise ValidationError(
                "give either a reference snapshot or explicit desired features"
            )
        desired = _vector(pairs, "features.desired", 6)
    elif not has_reference:
        raise ValidationError("missing 'reference.position' (or 'features.desired')")

    n = initial_q.size
    try:
        gains = ctl.ControllerGains(
            beta=_gain_vector(pairs, "gains.beta", n),
            a_d=_gain_vector(pairs, "gains.a_d", n),
            a_p=_gain_vector(pairs, "gains.a_p", n),
            a_a=_gain_vector(pairs, "gains.a_a", n),
            servo_gain=float(pairs["gains.lambda"]),
            epsilon=float(pairs["gains.epsilon"]),
            delta_limit=float(pairs["gains.delta_limit"]),
        )
    except ValueError as exc:
        raise ValidationError(f"gains: {exc}") from exc

    factor = float(pairs["perturbation.factor"])
    if not 0.0 <= factor <= 0.5:
        raise ValidationError("'perturbation.factor' must lie in [0, 0.5]")
    dt = _positive(pairs, "sim.dt")
    horizon = float(pairs["sim.horizon"])
    if horizon < 0:
        raise ValidationError("'sim.horizon' must be non-negative")

    return ScenarioConfig(
        rod=rod_props,
        uav=uav,
        mixer=mixer,
        mounts=mounts,
        local_camera=_camera_from(pairs, "camera_local"),
        global_camera=_camera_from(pairs, "camera_global"),
        target=target,
        initial_q=initial_q,
        reference_q=reference_q,
        desired_features=desired,
        gains=gains,
        perturbation_factor=factor,
        perturbation_seed=int(pairs["perturbation.seed"]),
        dt=dt,
        horizon=horizon,
        quadrature_segments=int(pairs["sim.quadrature_segments"]),
        growth_factor=float(pairs["termination.growth_factor"]),
        growth_level=float(pairs["termination.growth_level"]),
        done_rmse=float(pairs["termination.done_rmse"]),
        done_steps=int(pairs["termination.done_steps"]),
        entry_frames=int(pairs["servo.entry_frames"]),
        recovery_min_duration=float(pairs["servo.recovery_min_duration"]),
        recovery_rate_scale=float(pairs["servo.recovery_rate_scale"]),
        rate_limit=_positive(pairs, "servo.rate_limit"),
        tilt_limit=_positive(pairs, "servo.tilt_limit"),
        tilt_rate_limit=_positive(pairs, "servo.tilt_rate_limit"),
        tilt_chase=_positive(pairs, "servo.tilt_chase"),
        command_filter=_positive(pairs, "servo.command_filter"),
        error_limit=_positive(pairs, "servo.error_limit"),
        direct_generalized_input=bool(pairs["sim.direct_generalized_input"]),
        adaptation_clamp=bool(pairs["sim.adaptation_clamp"]),
        notices=notices,
    )


def bundled_config_path(name: str) -> Path:
    return Path(__file__).parent / "configs" / f"{name}.cfg"


def build_model(config: ScenarioConfig) -> dyn.SystemModel:
    return dyn.SystemModel(
        rod=config.rod,
        basis=constant_bending_basis(config.rod.length),
        uav=config.uav,
        mixer=config.mixer,
        mounts=config.mounts,
        grid=kin.QuadratureGrid.uniform(config.rod.length, config.quadrature_segments),
    )


def build_world(config: ScenarioConfig) -> vis.SyntheticWorld:
    return vis.SyntheticWorld(
        target=config.target,
        local_camera=config.local_camera,
        global_camera=config.global_camera,
    )


def desired_features(config: ScenarioConfig, world: vis.SyntheticWorld) -> np.ndarray:
    """Advanced features of the reference snapshot (or the explicit vector)."""
    if config.desired_features is not None:
        return np.asarray(config.desired_features, float)
    model = build_model(config)
    camera = vis.camera_pose_local(
        config.reference_q, model.basis, model.mounts, model.grid
    )
    projections = []
    for corner in world.target.corners():
        try:
            feat = vis.project(camera, world.local_camera, corner)
        except BehindCamera as exc:
            raise ReferenceNotVisible("reference snapshot corner behind camera") from exc
        if not feat.visible:
            raise ReferenceNotVisible("reference snapshot corner outside the image")
        projections.append(feat.normalized)
    return vis.advanced_features(np.array(projections))


# --------------------------------------------------------------------------
# the closed loop


def _observe(world, model, q):
    """Project the marker into both cameras; out-of-view corners keep their
    analytic image coordinates (the synthetic world is differentiable beyond
    the sensor bounds), only the visibility flags change."""
    nan3 = np.full(3, np.nan)
    corners = world.target.corners()
    try:
        camera = vis.camera_pose_local(q, model.basis, model.mounts, model.grid)
        feats = [vis.project(camera, world.local_camera, c) for c in corners]
        points = np.array([f.normalized for f in feats])
        pixels = np.array([f.pixel for f in feats])
        local_visible = all(f.visible for f in feats)
    except BehindCamera:
        points, pixels, local_visible = None, np.full((4, 2), np.nan), False
    try:
        global_cam = vis.camera_pose_global(q, model.mounts)
        detection = vis.project(global_cam, world.global_camera, world.target.center())
        global_visible = detection.visible
    except BehindCamera:
        detection, global_visible = None, False

    features = np.full(6, np.nan)
    compensated = None
    if points is not None:
        try:
            rotation = vis.virtual_camera_rotation(
                q, model.basis, model.mounts, model.grid
            )
            compensated = vis.compensate(points, rotation)
            features = vis.advanced_features(compensated)
        except (DegenerateProjection, AcmsimError):
            local_visible = False
    return features, pixels, local_visible, detection, global_visible


def run(config: ScenarioConfig) -> tuple[RunLog, RunSummary]:
    """Simulate one scenario; errors terminate the run and are reported in
    the summary, never raised."""
    model = build_model(config)
    world = build_world(config)
    p_star_d = desired_features(config, world)
    gains = config.gains
    n = config.initial_q.size
    dt = config.dt

    state = kin.GeneralizedState(config.initial_q.copy(), np.zeros(n))
    q_des = config.initial_q.copy()
    qdot_des = np.zeros(n)
    delta_hat = np.zeros(n)
    qdot_r_prev = np.zeros(n)
    attitude = None
    multipliers = ctl.draw_perturbation(
        config.perturbation_factor, config.perturbation_seed
    )
    supervisor = sv.Supervisor(
        entry_frames=config.entry_frames,
        done_threshold=config.done_rmse,
        done_frames=config.done_steps,
    )
    recovery_traj = None
    records = []
    termination = "horizon"
    prev_rmse = np.nan
    steps_total = int(round(config.horizon / dt))

    for k in range(steps_total):
        t = k * dt
        features, pixels, local_visible, detection, global_visible = _observe(
            world, model, state.q
        )
        e_feat = (
            vis.feature_error(features, p_star_d)
            if np.all(np.isfinite(features))
            else np.full(6, np.nan)
        )
        rmse = normalized_rmse(e_feat)

        try:
            mode = supervisor.update(local_visible, global_visible, rmse)
        except TargetLost:
            termination = "target-lost"
            break

        qdot_cmd = np.zeros(n)
        sampled_rod = None
        if mode is sv.ServoMode.IBVS:
            recovery_traj = None
            try:
                virtual = vis.virtual_camera_pose(
                    state.q, model.basis, model.mounts, model.grid
                )
                j_img = vis.interaction_matrix(
                    virtual, world.local_camera, world.target
                )
                twist = sv.ibvs_twist(e_feat, j_img, gains.servo_gain)
                tip_jac = kin.tip_jacobian(
                    state.q, model.basis, model.mounts, model.grid
                )
                qdot_cmd = sv.camera_twist_to_qdot(
                    twist, tip_jac, model.mounts.local_camera
                )
                # roll/pitch are owned by the attitude loop
                qdot_cmd[0:2] = 0.0
                # uniform scaling keeps the commanded tip twist direction
                peak = float(np.max(np.abs(qdot_cmd)))
                if peak > config.rate_limit:
                    qdot_cmd *= config.rate_limit / peak
            except AcmsimError:
                termination = "non-finite"
                break
        elif mode is sv.ServoMode.RECOVERY:
            if recovery_traj is None:
                try:
                    target_shape = sv.recovery_target(
                        state.q, model.basis, model.mounts, model.grid, detection
                    )
                except AcmsimError:
                    termination = "target-lost"
                    break
                span = max(
                    config.recovery_min_duration,
                    config.recovery_rate_scale
                    * float(np.linalg.norm(target_shape - state.q[6:])),
                )
                recovery_traj = sv.plan_cubic(state.q[6:], target_shape, t, t + span)
            sampled_rod, rod_rates = sv.sample(recovery_traj, t)
            qdot_cmd[6:] = rod_rates

        # reference update.  Roll/pitch chase the previous step's attitude
        # references (hierarchy) through a linear first-order lag with a hard
        # slew cap; the other channels integrate the one-pole-filtered servo
        # rates.  Both keep every reference C^1 so the differenced reference
        # acceleration stays within actuator authority.
        target_rates = qdot_cmd.copy()
        if attitude is not None:
            tilt_goal = np.clip(
                [attitude.roll, attitude.pitch],
                -config.tilt_limit,
                config.tilt_limit,
            )
            target_rates[0:2] = np.clip(
                (tilt_goal - q_des[0:2]) / config.tilt_chase,
                -config.tilt_rate_limit,
                config.tilt_rate_limit,
            )
        blend = min(1.0, dt / config.command_filter)
        qdot_des = qdot_des + blend * (target_rates - qdot_des)
        q_des = q_des + dt * qdot_des
        # governor: never lead the plant beyond the error bound
        lead = config.error_limit
        q_des[2:] = np.clip(q_des[2:], state.q[2:] - lead, state.q[2:] + lead)
        if sampled_rod is not None:
            q_des[6:] = sampled_rod
            qdot_des[6:] = qdot_cmd[6:]

        error = state.q - q_des
        error_rate = state.qdot - qdot_des
        qdot_r = ctl.reference_velocity(qdot_des, error, gains.beta)
        s_q = ctl.sliding_variable(state.qdot, qdot_r)
        qddot_r = np.zeros(n) if k == 0 else (qdot_r - qdot_r_prev) / dt
        qdot_r_prev = qdot_r

        nominal = dyn.assemble(state, model)
        estimated = ctl.apply_perturbation(nominal, multipliers)
        tau = ctl.control_law(
            estimated, qddot_r, qdot_r, error, error_rate, gains, delta_hat
        )
        try:
            attitude = ctl.attitude_references(tau, q_des[2])
        except DegenerateThrust:
            pass  # keep the previous references through a momentary zero
        try:
            allocated = ctl.allocate(tau, nominal.actuation)
        except AcmsimError:
            termination = "non-finite"
            break

        direct = config.direct_generalized_input
        qdd = dyn.forward_dynamics(
            state,
            model,
            control=None if direct else allocated,
            generalized_force=tau if direct else None,
            matrices=nominal,
        )
        delta_true = (
            -(estimated.mass - nominal.mass) @ qdd
            - (
                (estimated.coriolis - nominal.coriolis)
                + (estimated.damping - nominal.damping)
            )
            @ state.qdot
            - (estimated.stiffness - nominal.stiffness)
            - nominal.external
        )
        lyapunov = ctl.lyapunov_value(
            s_q, error, delta_hat - delta_true, gains, estimated.mass
        )
        delta_hat = ctl.adaptation_update(
            delta_hat,
            s_q,
            gains.a_a,
            dt,
            limit=gains.delta_limit if config.adaptation_clamp else None,
        )

        records.append(
            StepRecord(
                time=t,
                q=state.q.copy(),
                qdot=state.qdot.copy(),
                error=error.copy(),
                features=features,
                feature_error=e_feat,
                mode=mode.value,
                rotor_thrusts=allocated.rotor_thrusts.copy(),
                tendon_tensions=allocated.tendon_tensions.copy(),
                delta_hat=delta_hat.copy(),
                lyapunov=lyapunov,
                rmse=rmse,
                corner_pixels=pixels,
            )
        )

        if mode is sv.ServoMode.DONE:
            termination = "converged"
            break
        if (
            mode is sv.ServoMode.IBVS
            and np.isfinite(prev_rmse)
            and np.isfinite(rmse)
            and rmse > config.growth_factor * prev_rmse
            and rmse > config.growth_level
        ):
            termination = "error-growth"
            break
        prev_rmse = rmse

        try:
            state = dyn.step(
                state,
                model,
                None if direct else allocated,
                dt,
                generalized_force=tau if direct else None,
            )
        except AcmsimError:
            termination = "non-finite"
            break

    finite = [r.rmse for r in records if np.isfinite(r.rmse)]
    summary = RunSummary(
        initial_rmse=finite[0] if finite else np.nan,
        final_rmse=finite[-1] if finite else np.nan,
        steps=len(records),
        termination=termination,
    )
    return RunLog(records=records), summary


def with_overrides(
    config: ScenarioConfig,
    perturbation_factor: float | None = None,
    perturbation_seed: int | None = None,
) -> ScenarioConfig:
    """Config copy with CLI-level overrides applied."""
    updates = {}
    if perturbation_factor is not None:
        if not 0.0 <= perturbation_factor <= 0.5:
            raise ValidationError("'perturbation.factor' must lie in [0, 0.5]")
        updates["perturbation_factor"] = perturbation_factor
    if perturbation_seed is not None:
        updates["perturbation_seed"] = perturbation_seed
    return replace(config, **updates) if updates else config


def output_directory(flag_value: str | None) -> Path:
    """Output directory: CLI flag, then ACMSIM_OUT, then the working dir."""
    if flag_value:
        return Path(flag_value)
    return Path(os.environ.get("ACMSIM_OUT", "."))
