"""Shared fixtures: the published parameter set and standard mounts."""

import numpy as np

from acmsim import dynamics as dyn
from acmsim import kinematics as kin
from acmsim import liegroup as lg
from acmsim import rod

ROD_LENGTH = 1.0


def standard_mounts() -> kin.MountTransforms:
    """Arm hanging below the body, tip camera aligned with the tip frame,
    global camera looking straight down from the body."""
    attach = lg.SE3Pose(
        lg.euler_zyx_rotation(np.pi, 0.0, -np.pi / 2), np.array([0.0, 0.0, -0.05])
    )
    cam_local = lg.SE3Pose(np.eye(3), np.zeros(3))
    cam_global = lg.SE3Pose(
        lg.euler_zyx_rotation(np.pi, 0.0, 0.0), np.array([0.0, 0.0, -0.03])
    )
    return kin.MountTransforms(attach, cam_local, cam_global)


def table_rod(**overrides) -> rod.RodProperties:
    values = dict(
        length=ROD_LENGTH,
        diameter=2e-3,
        density=6.45e3,
        young_modulus=5e10,
        poisson=0.33,
        damping_coeff=1e2,
    )
    values.update(overrides)
    return rod.RodProperties(**values)


def table_uav() -> dyn.UavInertia:
    return dyn.UavInertia(
        mass=0.7331, moments=np.array([2.4388e-2, 2.6151e-2, 2.6929e-2])
    )


def table_model(
    gravity=9.81, segments=20, rod_density=6.45e3, **rod_overrides
) -> dyn.SystemModel:
    props = table_rod(density=rod_density, **rod_overrides)
    return dyn.SystemModel(
        rod=props,
        basis=rod.constant_bending_basis(props.length),
        uav=table_uav(),
        mixer=dyn.MixerParams(gravity=gravity),
        mounts=standard_mounts(),
        grid=kin.QuadratureGrid.uniform(props.length, segments),
    )


def total_weight(model: dyn.SystemModel) -> float:
    rho_al = model.rod.density * model.rod.cross_section_area * model.rod.length
    return (model.uav.mass + rho_al) * model.mixer.gravity


def table_local_camera():
    from acmsim import vision as vis

    return vis.CameraIntrinsics(1024, 1024, 886.8, 512.0, 512.0, 0.5, 10.0)


def table_global_camera():
    from acmsim import vision as vis

    return vis.CameraIntrinsics(500, 500, 350.5, 250.0, 250.0, 0.01, 20.0)


# Marker frame aligned with the reference tip-camera image axes: a straight
# rod at (0, 0, z) sees the corners in the pinned (-,-), (-,+), (+,+), (+,-)
# order.
MARKER_ROTATION = np.array([[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])


def scenario_world():
    from acmsim import vision as vis

    target = vis.FiducialTarget(
        pose=lg.SE3Pose(MARKER_ROTATION, np.zeros(3)), side=0.2
    )
    return vis.SyntheticWorld(
        target=target,
        local_camera=table_local_camera(),
        global_camera=table_global_camera(),
    )


def reference_q() -> np.ndarray:
    """Snapshot state: level, centered over the marker, straight rod, 3 m up."""
    return np.array([0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0])


def random_state(rng, rod_coords=2, tilt=0.4) -> kin.GeneralizedState:
    q = np.concatenate(
        [
            rng.uniform(-tilt, tilt, size=2),
            rng.uniform(-np.pi, np.pi, size=1),
            rng.uniform(-2.0, 2.0, size=3),
            rng.uniform(-1.0, 1.0, size=rod_coords),
        ]
    )
    return kin.GeneralizedState(q, rng.normal(size=6 + rod_coords))
