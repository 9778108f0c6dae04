"""Assembly and integration of the coupled UAV + rod Lagrangian ODE.

    M(q) qdd + (C(q, qd) + D) qd + K(q) = B(q) tau + tau_ext(q)

All integrals over the rod are midpoint-rule sums on the model's quadrature
grid, evaluated from one batched chain walk per assembly (the main state plus
the two finite-difference states for the Jacobian rates).  Gravity is routed
through the external force vector (UAV point wrench plus distributed rod
wrench), never through the elastic term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularMass
from .kinematics import (
    BatchedChain,
    GeneralizedState,
    MountTransforms,
    QuadratureGrid,
    _batched_ad,
    batched_chain,
    chain_nodes,
    uav_pose,
)
from .liegroup import euler_rate_map, euler_zyx_rotation
from .rod import (
    RodProperties,
    StrainBasis,
    section_damping,
    section_inertia,
    section_stiffness,
    tendon_routing,
)

_CONDITION_LIMIT = 1.0e12
_RATE_FD_EPS = 1.0e-6


@dataclass(frozen=True)
class UavInertia:
    """Rigid-body mass and principal moments of the quadrotor."""

    mass: float
    moments: np.ndarray  # (I1, I2, I3)

    def __post_init__(self):
        if self.mass <= 0 or np.any(np.asarray(self.moments) <= 0):
            raise ValueError("mass and principal moments must be positive")

    def matrix(self) -> np.ndarray:
        i1, i2, i3 = self.moments
        return np.diag([i1, i2, i3, self.mass, self.mass, self.mass])


@dataclass(frozen=True)
class MixerParams:
    """Rotor geometry and gravity; arm length and drag factor are not
    published for this platform, so both are config-overridable defaults."""

    arm_length: float = 0.23
    drag_factor: float = 0.016
    gravity: float = 9.81

    def __post_init__(self):
        if self.arm_length <= 0 or self.drag_factor <= 0:
            raise ValueError("arm length and drag factor must be positive")


@dataclass(frozen=True)
class ActuatorInput:
    """Physical actuator values: rotor thrusts (N) and tendon tensions (N)."""

    rotor_thrusts: np.ndarray
    tendon_tensions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotor_thrusts", np.asarray(self.rotor_thrusts, float))
        object.__setattr__(
            self, "tendon_tensions", np.asarray(self.tendon_tensions, float)
        )
        if np.any(self.rotor_thrusts < -1e-9) or np.any(self.tendon_tensions < -1e-9):
            raise ValueError("rotor thrusts and tendon tensions must be >= 0")

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.rotor_thrusts, self.tendon_tensions])


@dataclass
class DynamicsMatrices:
    """All terms of the governing ODE assembled at one state."""

    mass: np.ndarray
    coriolis: np.ndarray
    damping: np.ndarray
    stiffness: np.ndarray
    actuation: np.ndarray
    external: np.ndarray


@dataclass(frozen=True)
class SystemModel:
    """Everything constant over a run: bodies, mounts, grid, mixer."""

    rod: RodProperties
    basis: StrainBasis
    uav: UavInertia
    mixer: MixerParams
    mounts: MountTransforms
    grid: QuadratureGrid


def mixer_matrix(mixer: MixerParams) -> np.ndarray:
    """Body wrench per unit rotor thrust for the cross-configured quadrotor."""
    r, k = mixer.arm_length, mixer.drag_factor
    return np.array(
        [
            [0.0, r, 0.0, -r],
            [-r, 0.0, r, 0.0],
            [k, -k, k, -k],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0],
        ]
    )


def _mass_from_arrays(
    jac_uav: np.ndarray, node_jac: np.ndarray, model: SystemModel
) -> np.ndarray:
    m_bar = section_inertia(model.rod)
    mass = jac_uav.T @ model.uav.matrix() @ jac_uav
    mass += np.einsum(
        "k,kia,ij,kjb->ab", model.grid.weights, node_jac, m_bar, node_jac
    )
    return 0.5 * (mass + mass.T)


def _coriolis_from_arrays(
    qdot: np.ndarray,
    jac_uav: np.ndarray,
    jac_uav_rate: np.ndarray,
    node_jac: np.ndarray,
    node_rates: np.ndarray,
    model: SystemModel,
) -> np.ndarray:
    # Per body the contribution is J^T (M Jdot - ad*_v M J): with ad* = ad^T
    # this reproduces the rigid-body Euler equations (pinned by the
    # free-spin oracle and the energy-balance acceptance test).
    m_b = model.uav.matrix()
    v_b = jac_uav @ qdot
    coad_b = _batched_ad(v_b[None, :])[0].T
    cor = jac_uav.T @ (m_b @ jac_uav_rate - coad_b @ m_b @ jac_uav)
    m_bar = section_inertia(model.rod)
    v_nodes = np.einsum("kin,n->ki", node_jac, qdot)
    coad_nodes = np.swapaxes(_batched_ad(v_nodes), -1, -2)
    inner = np.einsum("ij,kjn->kin", m_bar, node_rates)
    inner -= np.einsum("kij,jm,kmn->kin", coad_nodes, m_bar, node_jac)
    cor += np.einsum("k,kin,kim->nm", model.grid.weights, node_jac, inner)
    return cor


def _stiffness_from_arrays(
    strain: np.ndarray, basis_matrices: np.ndarray, model: SystemModel, n: int
) -> np.ndarray:
    h_bar = section_stiffness(model.rod)
    deviation = strain - model.basis.reference
    out = np.zeros(n)
    out[6:] = np.einsum(
        "k,kin,ij,kj->n", model.grid.weights, basis_matrices, h_bar, deviation
    )
    return out


def _damping_from_arrays(basis_matrices: np.ndarray, model: SystemModel) -> np.ndarray:
    d_bar = section_damping(model.rod)
    n_s = model.basis.coord_count
    out = np.zeros((6 + n_s, 6 + n_s))
    out[6:, 6:] = np.einsum(
        "k,kin,ij,kjm->nm", model.grid.weights, basis_matrices, d_bar, basis_matrices
    )
    return out


def _actuation_from_arrays(
    q: np.ndarray, basis_matrices: np.ndarray, model: SystemModel
) -> np.ndarray:
    n = q.size
    n_a = model.rod.tendon_count
    t_map = euler_rate_map(q[0], q[1])
    r_b = euler_zyx_rotation(q[0], q[1], q[2])
    frame = np.zeros((6, 6))
    frame[:3, :3] = t_map.T
    frame[3:, 3:] = r_b
    routing = tendon_routing(model.rod)
    b_a = np.stack([routing(s) for s in model.grid.nodes])
    out = np.zeros((n, 4 + n_a))
    out[:6, :4] = frame @ mixer_matrix(model.mixer)
    out[6:, 4:] = np.einsum(
        "k,kin,kim->nm", model.grid.weights, basis_matrices, b_a
    )
    return out


def _gravity_from_arrays(
    q: np.ndarray,
    jac_uav: np.ndarray,
    node_jac: np.ndarray,
    world_rot: np.ndarray,
    model: SystemModel,
) -> np.ndarray:
    g = model.mixer.gravity
    r_b = uav_pose(q).rotation
    uav_weight = np.array([0.0, 0.0, -model.uav.mass * g])
    out = jac_uav[3:, :].T @ (r_b.T @ uav_weight)
    line_weight = np.array(
        [0.0, 0.0, -model.rod.density * model.rod.cross_section_area * g]
    )
    local = np.einsum("kji,j->ki", world_rot, line_weight)
    out += np.einsum("k,kjn,kj->n", model.grid.weights, node_jac[:, 3:, :], local)
    return out


def _chain_with_rates(
    state: GeneralizedState, model: SystemModel
) -> tuple[BatchedChain, np.ndarray, np.ndarray]:
    """One batched walk for the state and its two rate-perturbed copies."""
    rate_norm = float(np.max(np.abs(state.qdot)))
    if rate_norm == 0.0:
        bc = batched_chain(state.q[None, :], model.basis, model.mounts, model.grid)
        shape_uav = bc.jac_uav[0].shape
        return bc, np.zeros(shape_uav), np.zeros_like(bc.node_jac[0])
    eps = _RATE_FD_EPS / max(1.0, rate_norm)
    rows = np.stack(
        [state.q, state.q + eps * state.qdot, state.q - eps * state.qdot]
    )
    bc = batched_chain(rows, model.basis, model.mounts, model.grid)
    jac_uav_rate = (bc.jac_uav[1] - bc.jac_uav[2]) / (2.0 * eps)
    node_rates = (bc.node_jac[1] - bc.node_jac[2]) / (2.0 * eps)
    return bc, jac_uav_rate, node_rates


def mass_matrix(state: GeneralizedState, model: SystemModel) -> np.ndarray:
    """Generalized inertia: UAV block plus quadrature-assembled rod inertia."""
    bc = batched_chain(state.q[None, :], model.basis, model.mounts, model.grid)
    return _mass_from_arrays(bc.jac_uav[0], bc.node_jac[0], model)


def coriolis_matrix(state: GeneralizedState, model: SystemModel) -> np.ndarray:
    bc, jac_uav_rate, node_rates = _chain_with_rates(state, model)
    return _coriolis_from_arrays(
        state.qdot, bc.jac_uav[0], jac_uav_rate, bc.node_jac[0], node_rates, model
    )


def stiffness_vector(state: GeneralizedState, model: SystemModel) -> np.ndarray:
    """Generalized elastic force; zero on the six UAV coordinates."""
    bc = batched_chain(state.q[None, :], model.basis, model.mounts, model.grid)
    return _stiffness_from_arrays(bc.strain[0], bc.basis_matrices, model, state.n)


def damping_matrix(model: SystemModel) -> np.ndarray:
    """Constant generalized damping; zero on the UAV block."""
    bq = np.stack([model.basis.matrix_at(s) for s in model.grid.nodes])
    return _damping_from_arrays(bq, model)


def actuation_matrix(state: GeneralizedState, model: SystemModel) -> np.ndarray:
    """Block-diagonal input map: rotor mixer block and tendon block."""
    bq = np.stack([model.basis.matrix_at(s) for s in model.grid.nodes])
    return _actuation_from_arrays(state.q, bq, model)


def external_forces(
    state: GeneralizedState,
    model: SystemModel,
    body_wrench: np.ndarray | None = None,
    distributed=None,
) -> np.ndarray:
    """Generalized external force.  Defaults to gravity on the UAV and rod;
    callers may supply a body-frame UAV wrench and a distributed wrench
    density (callable of arc length, local frame) instead."""
    if body_wrench is None and distributed is None:
        bc = batched_chain(state.q[None, :], model.basis, model.mounts, model.grid)
        return _gravity_from_arrays(
            state.q, bc.jac_uav[0], bc.node_jac[0], bc.world_rot[0], model
        )
    nodes = chain_nodes(state.q, model.basis, model.mounts, model.grid)
    out = np.zeros(state.n)
    if body_wrench is not None:
        out += nodes.uav_jacobian.T @ np.asarray(body_wrench, float)
    if distributed is not None:
        for w, s, jac in zip(model.grid.weights, model.grid.nodes, nodes.jacobians):
            out += w * jac.T @ np.asarray(distributed(s), float)
    return out


def assemble(state: GeneralizedState, model: SystemModel) -> DynamicsMatrices:
    """All ODE terms at one state, sharing a single batched chain walk."""
    bc, jac_uav_rate, node_rates = _chain_with_rates(state, model)
    jac_uav = bc.jac_uav[0]
    node_jac = bc.node_jac[0]
    return DynamicsMatrices(
        mass=_mass_from_arrays(jac_uav, node_jac, model),
        coriolis=_coriolis_from_arrays(
            state.qdot, jac_uav, jac_uav_rate, node_jac, node_rates, model
        ),
        damping=_damping_from_arrays(bc.basis_matrices, model),
        stiffness=_stiffness_from_arrays(
            bc.strain[0], bc.basis_matrices, model, state.n
        ),
        actuation=_actuation_from_arrays(state.q, bc.basis_matrices, model),
        external=_gravity_from_arrays(
            state.q, jac_uav, node_jac, bc.world_rot[0], model
        ),
    )


def forward_dynamics(
    state: GeneralizedState,
    model: SystemModel,
    control: ActuatorInput | None = None,
    generalized_force: np.ndarray | None = None,
    matrices: DynamicsMatrices | None = None,
) -> np.ndarray:
    """Solve the ODE for qdd.  ``generalized_force`` bypasses the actuator
    map and applies the vector directly (diagnostic use)."""
    mats = matrices if matrices is not None else assemble(state, model)
    if np.linalg.cond(mats.mass) > _CONDITION_LIMIT:
        raise SingularMass("mass matrix condition number above 1e12")
    tau = np.zeros(state.n)
    if control is not None:
        tau += mats.actuation @ control.stacked()
    if generalized_force is not None:
        tau += np.asarray(generalized_force, float)
    rhs = tau + mats.external - (mats.coriolis + mats.damping) @ state.qdot
    rhs -= mats.stiffness
    return cho_solve(cho_factor(mats.mass, lower=True), rhs)


def step(
    state: GeneralizedState,
    model: SystemModel,
    control: ActuatorInput | None,
    dt: float,
    generalized_force: np.ndarray | None = None,
) -> GeneralizedState:
    """One classical RK4 step with the actuator values held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")

    def rates(q, qd):
        s = GeneralizedState(q, qd)
        return qd, forward_dynamics(s, model, control, generalized_force)

    q0, qd0 = state.q, state.qdot
    k1q, k1v = rates(q0, qd0)
    k2q, k2v = rates(q0 + 0.5 * dt * k1q, qd0 + 0.5 * dt * k1v)
    k3q, k3v = rates(q0 + 0.5 * dt * k2q, qd0 + 0.5 * dt * k2v)
    k4q, k4v = rates(q0 + dt * k3q, qd0 + dt * k3v)
    q_new = q0 + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
    qd_new = qd0 + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return GeneralizedState(q_new, qd_new)  # constructor rejects non-finite


def total_energy(state: GeneralizedState, model: SystemModel) -> float:
    """Kinetic plus elastic plus gravitational potential energy."""
    bc = batched_chain(state.q[None, :], model.basis, model.mounts, model.grid)
    kinetic = 0.5 * state.qdot @ _mass_from_arrays(
        bc.jac_uav[0], bc.node_jac[0], model
    ) @ state.qdot
    h_bar = section_stiffness(model.rod)
    deviation = bc.strain[0] - model.basis.reference
    elastic = 0.5 * np.einsum(
        "k,ki,ij,kj->", model.grid.weights, deviation, h_bar, deviation
    )
    g = model.mixer.gravity
    rho_a = model.rod.density * model.rod.cross_section_area
    potential = model.uav.mass * g * state.q[5]
    potential += rho_a * g * np.dot(model.grid.weights, bc.world_pos[0][:, 2])
    return float(kinetic + elastic + potential)
