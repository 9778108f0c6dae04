"""SO(3)/SE(3) primitives shared by every other module.

Twists are plain shape-(6,) arrays ordered angular-first: ``xi = (k, u)`` with
``k`` the rotational part and ``u`` the linear part.  All 6x6 operators
(adjoints, their algebra counterparts) follow the same block ordering, with
the skew block of ``k`` in the upper left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GimbalLock

# Below this rotation angle the closed-form Rodrigues coefficients are
# replaced by their series expansions to avoid catastrophic cancellation.
SMALL_ANGLE = 1.0e-6

_GIMBAL_MARGIN = 1.0e-3


def skew(v: np.ndarray) -> np.ndarray:
    """Antisymmetric matrix with skew(v) @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def twist(angular: np.ndarray, linear: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(angular, float), np.asarray(linear, float)])


def angular_part(xi: np.ndarray) -> np.ndarray:
    return np.asarray(xi, float)[:3]


def linear_part(xi: np.ndarray) -> np.ndarray:
    return np.asarray(xi, float)[3:]


def hat(xi: np.ndarray) -> np.ndarray:
    """4x4 matrix form of a twist, skew(k) in the upper-left block."""
    m = np.zeros((4, 4))
    m[:3, :3] = skew(xi[:3])
    m[:3, 3] = xi[3:]
    return m


def vee(m: np.ndarray, tol: float = 1.0e-9) -> np.ndarray:
    """Inverse of hat.  Rejects matrices that are not in se(3)."""
    m = np.asarray(m, float)
    if m.shape != (4, 4):
        raise ValueError(f"vee expects a 4x4 matrix, got {m.shape}")
    upper = m[:3, :3]
    if np.max(np.abs(upper + upper.T)) > tol or np.max(np.abs(m[3, :])) > tol:
        raise ValueError("matrix is not in se(3)")
    return np.array([m[2, 1], m[0, 2], m[1, 0], m[0, 3], m[1, 3], m[2, 3]])


@dataclass(frozen=True)
class SE3Pose:
    """Rotation + translation pair with composition helpers."""

    rotation: np.ndarray
    translation: np.ndarray

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        return SE3Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "SE3Pose") -> "SE3Pose":
        return self.compose(other)

    def inverse(self) -> "SE3Pose":
        rt = self.rotation.T
        return SE3Pose(rt, -rt @ self.translation)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(point, float) + self.translation

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "SE3Pose":
        m = np.asarray(m, float)
        return cls(m[:3, :3].copy(), m[:3, 3].copy())


def identity_pose() -> SE3Pose:
    return SE3Pose(np.eye(3), np.zeros(3))


def _rodrigues_coefficients(theta: float) -> tuple[float, float, float]:
    """Coefficients (a, b, c) of R = I + a*S + b*S^2 and V = I + b*S + c*S^2."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    t2 = theta * theta
    return (
        np.sin(theta) / theta,
        (1.0 - np.cos(theta)) / t2,
        (theta - np.sin(theta)) / (t2 * theta),
    )


def exp_se3(xi: np.ndarray, h: float = 1.0) -> SE3Pose:
    """Closed-form exponential of h * hat(xi)."""
    w = h * np.asarray(xi[:3], float)
    t = h * np.asarray(xi[3:], float)
    theta = float(np.linalg.norm(w))
    s = skew(w)
    s2 = s @ s
    a, b, c = _rodrigues_coefficients(theta)
    rotation = np.eye(3) + a * s + b * s2
    v = np.eye(3) + b * s + c * s2
    return SE3Pose(rotation, v @ t)


def adjoint_rep(g: SE3Pose) -> np.ndarray:
    """Ad_g = [[R, 0], [S(r) R, R]] under angular-first ordering."""
    ad = np.zeros((6, 6))
    ad[:3, :3] = g.rotation
    ad[3:, 3:] = g.rotation
    ad[3:, :3] = skew(g.translation) @ g.rotation
    return ad


def ad_op(xi: np.ndarray) -> np.ndarray:
    """ad_xi = [[S(k), 0], [S(u), S(k)]]."""
    sk = skew(xi[:3])
    out = np.zeros((6, 6))
    out[:3, :3] = sk
    out[3:, 3:] = sk
    out[3:, :3] = skew(xi[3:])
    return out


def coadjoint(xi: np.ndarray) -> np.ndarray:
    """Co-adjoint operator, the transpose of ad_xi."""
    return ad_op(xi).T


def adjoint_integral(xi: np.ndarray, h: float) -> np.ndarray:
    """Integral of Ad_exp(t*hat(xi)) for t in [0, h], by rapidly converging series.

    Equals h * phi1(h * ad_xi) with phi1(A) = sum A^k / (k+1)!.
    """
    a = ad_op(xi)
    term = h * np.eye(6)
    total = term.copy()
    for k in range(1, 40):
        term = term @ a * (h / (k + 1))
        total += term
        if np.max(np.abs(term)) < 1.0e-16 * max(1.0, np.max(np.abs(total))):
            break
    return total


def euler_zyx_rotation(phi: float, theta: float, psi: float) -> np.ndarray:
    """Rotation R_z(psi) R_y(theta) R_x(phi)."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cf, -sf], [0.0, sf, cf]])
    ry = np.array([[ct, 0.0, st], [0.0, 1.0, 0.0], [-st, 0.0, ct]])
    rz = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def euler_rate_map(phi: float, theta: float) -> np.ndarray:
    """Map from ZYX Euler-angle rates to body angular velocity."""
    if abs(theta) >= np.pi / 2.0 - _GIMBAL_MARGIN:
        raise GimbalLock(f"pitch {theta!r} too close to +-pi/2")
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [1.0, 0.0, -st],
            [0.0, cf, sf * ct],
            [0.0, -sf, cf * ct],
        ]
    )
