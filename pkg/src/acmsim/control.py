"""Low-level adaptive controller: sliding variable, model-based law with
uncertainty adaptation, attitude references for the underactuated base,
actuator allocation, and the Lyapunov diagnostic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ActuatorInput, DynamicsMatrices
from .errors import (
    DegenerateThrust,
    InfeasibleAllocation,
    PerturbationBreaksPD,
)

_PERTURBED_TERMS = ("mass", "coriolis", "damping", "stiffness")


@dataclass(frozen=True)
class ControllerGains:
    """Diagonal gain sets.  Construction enforces the stability condition
    a_p > a_d * beta / (2 epsilon) elementwise."""

    beta: np.ndarray
    a_d: np.ndarray
    a_p: np.ndarray
    a_a: np.ndarray
    servo_gain: float = 0.8
    epsilon: float = 0.5
    delta_limit: float | None = 50.0

    def __post_init__(self):
        for name in ("beta", "a_d", "a_p", "a_a"):
            value = np.asarray(getattr(self, name), float)
            object.__setattr__(self, name, value)
            if np.any(value <= 0):
                raise ValueError(f"{name} must be positive definite (diagonal)")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.servo_gain <= 0:
            raise ValueError("servo gain must be positive")
        bound = self.a_d * self.beta / (2.0 * self.epsilon)
        if np.any(self.a_p <= bound):
            raise ValueError(
                "gain condition violated: need a_p > a_d * beta / (2 eps) elementwise"
            )

    @property
    def sigma(self) -> np.ndarray:
        """Diagonal of the inverse adaptation gain."""
        return 1.0 / self.a_a

    @classmethod
    def uniform(cls, n: int, beta=2.0, a_d=4.0, a_p=20.0, a_a=10.0, **kw):
        return cls(
            beta=np.full(n, float(beta)),
            a_d=np.full(n, float(a_d)),
            a_p=np.full(n, float(a_p)),
            a_a=np.full(n, float(a_a)),
            **kw,
        )


@dataclass
class AdaptiveState:
    """Per-step controller bookkeeping (logged, not owned by the plant)."""

    delta_hat: np.ndarray
    error: np.ndarray
    sliding: np.ndarray
    lyapunov: float


@dataclass(frozen=True)
class AttitudeReference:
    roll: float
    pitch: float
    yaw: float
    thrust: float


def reference_velocity(
    qdot_desired: np.ndarray, error: np.ndarray, beta: np.ndarray
) -> np.ndarray:
    """Reference rates: desired rates minus the proportional error term."""
    return np.asarray(qdot_desired, float) - np.asarray(beta, float) * error


def sliding_variable(qdot: np.ndarray, qdot_reference: np.ndarray) -> np.ndarray:
    return np.asarray(qdot, float) - np.asarray(qdot_reference, float)


def control_law(
    estimated: DynamicsMatrices,
    qddot_reference: np.ndarray,
    qdot_reference: np.ndarray,
    error: np.ndarray,
    error_rate: np.ndarray,
    gains: ControllerGains,
    delta_hat: np.ndarray,
) -> np.ndarray:
    """Generalized control force from the estimated model and error terms."""
    return (
        estimated.mass @ qddot_reference
        + (estimated.coriolis + estimated.damping) @ qdot_reference
        + estimated.stiffness
        - gains.a_d * error_rate
        - gains.a_p * error
        + delta_hat
    )


def adaptation_update(
    delta_hat: np.ndarray,
    sliding: np.ndarray,
    a_a: np.ndarray,
    dt: float,
    limit: float | None = 50.0,
) -> np.ndarray:
    """Explicit-Euler integration of the adaptation law with an optional
    anti-windup clamp on the infinity norm."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = np.asarray(delta_hat, float) - np.asarray(a_a, float) * sliding * dt
    if limit is not None:
        out = np.clip(out, -limit, limit)
    return out


def attitude_references(tau: np.ndarray, yaw_desired: float) -> AttitudeReference:
    """Roll/pitch references realizing the lateral force demand through the
    thrust direction (near-hover outer loop)."""
    force = np.asarray(tau, float)[3:6]
    magnitude = float(np.linalg.norm(force))
    if magnitude < 1e-6:
        raise DegenerateThrust("total force too small for attitude references")
    c, s = np.cos(yaw_desired), np.sin(yaw_desired)
    pitch = np.arctan((tau[3] * c + tau[4] * s) / magnitude)
    roll = np.arctan((tau[3] * s - tau[4] * c) / magnitude)
    return AttitudeReference(roll=roll, pitch=pitch, yaw=yaw_desired, thrust=magnitude)


def allocate(tau: np.ndarray, actuation: np.ndarray) -> ActuatorInput:
    """Map a generalized force demand onto physical actuators.

    Rotor block: least squares on the four actuated channels, then clamped to
    non-negative thrusts.  Tendon block: pseudoinverse plus the smallest
    uniform co-contraction making every tension non-negative (force-neutral
    for the antagonistic layout)."""
    tau = np.asarray(tau, float)
    b_m = actuation[:6, :4]
    b_s = actuation[6:, 4:]
    thrusts, *_ = np.linalg.lstsq(b_m, tau[:6], rcond=None)
    residual = tau[:6] - b_m @ thrusts
    actuated_residual = b_m @ np.linalg.lstsq(b_m, residual, rcond=None)[0]
    if np.linalg.norm(actuated_residual) > 1e-6 * max(1.0, np.linalg.norm(tau)):
        raise InfeasibleAllocation("residual on actuated rotor channels")
    thrusts = np.maximum(thrusts, 0.0)

    tensions = np.linalg.pinv(b_s) @ tau[6:]
    slack = max(0.0, -float(np.min(tensions))) if tensions.size else 0.0
    tensions = tensions + slack
    return ActuatorInput(rotor_thrusts=thrusts, tendon_tensions=tensions)


def draw_perturbation(factor: float, seed: int) -> np.ndarray:
    """One multiplicative factor per dynamic term (inertia, Coriolis,
    damping, stiffness), drawn once per run from a seeded uniform(-1, 1)."""
    if not 0.0 <= factor <= 0.5:
        raise ValueError("perturbation factor must lie in [0, 0.5]")
    rng = np.random.default_rng(seed)
    return 1.0 + factor * rng.uniform(-1.0, 1.0, size=len(_PERTURBED_TERMS))


def apply_perturbation(
    nominal: DynamicsMatrices, multipliers: np.ndarray
) -> DynamicsMatrices:
    """Scale the nominal terms into the controller's estimated model."""
    mass = 0.5 * multipliers[0] * (nominal.mass + nominal.mass.T)
    if np.min(np.linalg.eigvalsh(mass)) <= 0.0:
        raise PerturbationBreaksPD("perturbed inertia lost positive definiteness")
    return DynamicsMatrices(
        mass=mass,
        coriolis=multipliers[1] * nominal.coriolis,
        damping=multipliers[2] * nominal.damping,
        stiffness=multipliers[3] * nominal.stiffness,
        actuation=nominal.actuation,
        external=nominal.external,
    )


def perturb_model(
    nominal: DynamicsMatrices, factor: float, seed: int
) -> DynamicsMatrices:
    """Estimated model with a multiplicative perturbation per term."""
    return apply_perturbation(nominal, draw_perturbation(factor, seed))


def lyapunov_value(
    sliding: np.ndarray,
    error: np.ndarray,
    delta_error: np.ndarray,
    gains: ControllerGains,
    mass_estimate: np.ndarray,
) -> float:
    """Candidate 0.5 s'M^ s + 0.5 e'(beta A_d + A_p) e + 0.5 d~' Sigma d~."""
    quadratic = 0.5 * sliding @ mass_estimate @ sliding
    quadratic += 0.5 * error @ ((gains.beta * gains.a_d + gains.a_p) * error)
    quadratic += 0.5 * delta_error @ (gains.sigma * delta_error)
    return float(quadratic)
