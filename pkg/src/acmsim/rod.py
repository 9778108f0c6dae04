"""Material and geometric description of the continuum rod.

The rod is a single circular-section backbone actuated by parallel tendons.
Deformation is parameterized by a strain field ``xi(s) = xi_ref + B(s) @ q_s``
where ``B`` is a finite basis over the arc length.  The scenarios in this
package use the constant two-coordinate bending basis, but the assembly code
only relies on the callable interface so tests can supply varying bases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ArcLengthOutOfRange

# Straight, unstretched reference: unit tangent along local z, no curvature.
REFERENCE_STRAIN = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class RodProperties:
    """Backbone geometry and material constants (SI units)."""

    length: float
    diameter: float
    density: float
    young_modulus: float
    poisson: float
    damping_coeff: float
    tendon_offset_radius: float = 0.02
    tendon_count: int = 4

    def __post_init__(self):
        for name in ("length", "diameter", "density", "young_modulus",
                     "damping_coeff", "tendon_offset_radius"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 < self.poisson < 0.5:
            raise ValueError("poisson ratio must lie in (0, 0.5)")
        if self.tendon_count != 4:
            raise ValueError("only the four-tendon symmetric layout is supported")

    @property
    def cross_section_area(self) -> float:
        return np.pi * self.diameter**2 / 4.0

    @property
    def bending_moment_of_area(self) -> float:
        return np.pi * self.diameter**4 / 64.0

    @property
    def polar_moment_of_area(self) -> float:
        return np.pi * self.diameter**4 / 32.0

    @property
    def shear_modulus(self) -> float:
        return self.young_modulus / (2.0 * (1.0 + self.poisson))


def section_inertia(props: RodProperties) -> np.ndarray:
    """Inertia density of the cross-section: diag(rho*Ix, rho*Iy, rho*J, rho*A x3)."""
    rho = props.density
    ix = props.bending_moment_of_area
    a = props.cross_section_area
    return np.diag([rho * ix, rho * ix, rho * props.polar_moment_of_area,
                    rho * a, rho * a, rho * a])


def section_stiffness(props: RodProperties) -> np.ndarray:
    """Elasticity density: diag(E*Ix, E*Iy, G*J, G*A, G*A, E*A)."""
    e, g = props.young_modulus, props.shear_modulus
    ix = props.bending_moment_of_area
    a = props.cross_section_area
    return np.diag([e * ix, e * ix, g * props.polar_moment_of_area,
                    g * a, g * a, e * a])


def section_damping(props: RodProperties) -> np.ndarray:
    """Kelvin-Voigt damping density: eta times the geometric diagonal."""
    eta = props.damping_coeff
    ix = props.bending_moment_of_area
    a = props.cross_section_area
    return eta * np.diag([ix, ix, props.polar_moment_of_area, a, a, a])


@dataclass(frozen=True)
class StrainBasis:
    """Finite basis mapping rod coordinates to the strain twist field."""

    matrix: Callable[[float], np.ndarray]
    coord_count: int
    length: float
    reference: np.ndarray = field(default_factory=lambda: REFERENCE_STRAIN.copy())

    def matrix_at(self, s: float) -> np.ndarray:
        if not 0.0 <= s <= self.length + 1e-12:
            raise ArcLengthOutOfRange(f"s={s!r} outside [0, {self.length}]")
        b = self.matrix(s)
        if b.shape != (6, self.coord_count):
            raise ValueError(f"basis returned shape {b.shape}")
        return b


def constant_bending_basis(length: float) -> StrainBasis:
    """Two bending coordinates mapped to (k1, k2); no torsion, shear, or extension."""
    selector = np.zeros((6, 2))
    selector[0, 0] = 1.0
    selector[1, 1] = 1.0
    return StrainBasis(matrix=lambda s: selector, coord_count=2, length=length)


def strain_field(basis: StrainBasis, q_s: np.ndarray, s: float) -> np.ndarray:
    """Strain twist at arc length s: reference plus basis contribution."""
    return basis.reference + basis.matrix_at(s) @ np.asarray(q_s, float)


def tendon_routing(props: RodProperties) -> Callable[[float], np.ndarray]:
    """Map from tendon tensions to the distributed wrench density on the rod.

    Tendon i runs parallel to the backbone at offset
    r_i = r_t (cos a_i, sin a_i, 0), a_i in {0, pi/2, pi, 3pi/2}.  Unit pulling
    tension produces force -e3 and moment r_i x (-e3) on the cross-section.
    """
    e3 = np.array([0.0, 0.0, 1.0])
    columns = []
    for i in range(props.tendon_count):
        alpha = 2.0 * np.pi * i / props.tendon_count
        offset = props.tendon_offset_radius * np.array(
            [np.cos(alpha), np.sin(alpha), 0.0]
        )
        columns.append(np.concatenate([np.cross(offset, -e3), -e3]))
    b_a = np.column_stack(columns)

    def routing(s: float) -> np.ndarray:
        if not 0.0 <= s <= props.length + 1e-12:
            raise ArcLengthOutOfRange(f"s={s!r} outside [0, {props.length}]")
        return b_a

    return routing
